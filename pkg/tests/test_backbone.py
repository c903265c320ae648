import numpy as np
import pytest
import torch

import oracles
from gglnet.backbone import (
    ConfigError,
    ConvBlock,
    Encoder,
    SEAttention,
    Stage,
    StageConfig,
    count_parameters,
    stage_plan,
)
from helpers import REL_TOL, module_gradient_error, randomize, zero_parameters


def test_stage_config_validates_ratio():
    with pytest.raises(ConfigError):
        StageConfig(1, 18, se_ratio=4)


def test_se_zero_weights_halve_input():
    se = zero_parameters(SEAttention(8, 4).double())
    x = torch.randn(2, 8, 5, 5, dtype=torch.float64)
    assert torch.equal(se(x), 0.5 * x)


def test_se_zero_input():
    se = randomize(SEAttention(8, 4).double())
    x = torch.zeros(1, 8, 4, 4, dtype=torch.float64)
    assert torch.equal(se(x), x)


def test_se_gate_matches_matrix_oracle():
    se = randomize(SEAttention(8, 4).double(), seed=3)
    x = torch.randn(3, 8, 6, 5, dtype=torch.float64)
    expected = oracles.se_gate(
        x.numpy(),
        se.fc1.weight.detach().numpy(), se.fc1.bias.detach().numpy(),
        se.fc2.weight.detach().numpy(), se.fc2.bias.detach().numpy(),
    )
    np.testing.assert_allclose(se.gate(x).detach().numpy(), expected, rtol=1e-13, atol=1e-15)


def test_se_gate_in_open_interval():
    se = randomize(SEAttention(16, 4).double(), seed=4, scale=0.3)
    gate = se.gate(torch.randn(4, 16, 4, 4, dtype=torch.float64) * 3)
    assert torch.all((gate > 0) & (gate < 1))


def test_se_indivisible_channels():
    with pytest.raises(ConfigError):
        SEAttention(10, 4)


def test_conv_block_zero_body_is_identity():
    block = zero_parameters(ConvBlock(16, 16))
    x = torch.randn(1, 16, 8, 8)
    assert torch.equal(block(x), x)


def test_conv_block_shape():
    assert ConvBlock(16, 16)(torch.randn(1, 16, 32, 32)).shape == (1, 16, 32, 32)
    assert ConvBlock(4, 8)(torch.randn(2, 4, 8, 8)).shape == (2, 8, 8, 8)


def test_conv_block_channel_mismatch():
    with pytest.raises(ValueError):
        ConvBlock(8, 8)(torch.randn(1, 4, 8, 8))


def test_conv_block_gradient():
    torch.manual_seed(0)
    block = randomize(ConvBlock(4, 8).double(), seed=1)
    x = torch.randn(2, 4, 6, 6, dtype=torch.float64)
    assert module_gradient_error(block, [x]) < REL_TOL


def test_se_gradient():
    se = randomize(SEAttention(8, 4).double(), seed=2)
    x = torch.randn(2, 8, 5, 5, dtype=torch.float64)
    assert module_gradient_error(se, [x]) < REL_TOL


@pytest.mark.parametrize("cin,cout,n,size", [(1, 16, 1, 64), (16, 32, 2, 32)])
def test_stage_shapes(cin, cout, n, size):
    stage = Stage(StageConfig(cin, cout))
    out = stage(torch.randn(n, cin, size, size))
    assert out.shape == (n, cout, size, size)


def test_stage_has_six_convs():
    stage = Stage(StageConfig(1, 16))
    convs = [m for m in stage.modules() if isinstance(m, torch.nn.Conv2d) and m.kernel_size == (3, 3)]
    assert len(convs) == 6


def test_stage_gradient_all_parameters():
    stage = randomize(Stage(StageConfig(2, 4)).double(), seed=5, scale=0.4)
    x = torch.randn(2, 2, 6, 6, dtype=torch.float64)
    assert module_gradient_error(stage, [x]) < REL_TOL


@pytest.mark.parametrize("size", [256, 512])
def test_encode_scale_ladder(size):
    enc = Encoder(stage_plan(1, (4, 8, 8, 8, 8))).eval()
    with torch.no_grad():
        feats = enc(torch.randn(1, 1, size, size))
    assert [f.shape[-1] for f in feats] == [size >> k for k in range(5)]


def test_encode_batch_and_channels():
    enc = Encoder(stage_plan()).eval()
    with torch.no_grad():
        feats = enc(torch.randn(4, 1, 64, 64))
    assert len(feats) == 5
    assert [f.shape[0] for f in feats] == [4] * 5
    assert [f.shape[1] for f in feats] == [16, 32, 64, 128, 256]
    for a, b in zip(feats, feats[1:]):
        assert b.shape[-2:] == (a.shape[-2] // 2, a.shape[-1] // 2)


def test_encode_rejects_indivisible():
    with pytest.raises(ValueError):
        Encoder(stage_plan())(torch.randn(1, 1, 40, 40))


def test_encoder_needs_five_stages():
    with pytest.raises(ConfigError):
        Encoder(stage_plan(1, (16, 32, 64)))


def test_parameter_count_deterministic():
    assert count_parameters(Encoder(stage_plan())) == count_parameters(Encoder(stage_plan()))


def test_checkpoint_names():
    names = set(dict(Encoder(stage_plan()).named_parameters()))
    assert "stage3.block2.conv1.weight" in names
    assert "stage1.block1.proj.weight" in names
    assert "stage2.block2.se.fc1.weight" in names
