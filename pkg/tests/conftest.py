import numpy as np
import pytest

from iseg3d.grids import BinaryMask, Volume
from iseg3d.model import ModelConfig, build_model
from iseg3d.synthdata import SynthSpec, generate_case


def tiny_model_config(**overrides) -> ModelConfig:
    base = dict(
        patch_size=(16, 16, 16),
        base_channels=4,
        depth=2,
        embed_dim=32,
        attention_heads=2,
        transformer_blocks=1,
        interaction_blocks=1,
        mask_heads=3,
    )
    base.update(overrides)
    return ModelConfig(**base)


def tiny_case(seed=0, grid=16):
    spec = SynthSpec(grid_size=(grid,) * 3, radius_range=(2.0, 4.0), deformation_amplitude=1.0, seed=seed)
    return generate_case(spec, case_seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_model():
    model = build_model(tiny_model_config(), seed=7)
    model.eval()
    return model


def random_mask(rng, shape, p=0.3) -> BinaryMask:
    return BinaryMask((rng.random(shape) < p).astype(np.uint8))


def random_volume(rng, shape) -> Volume:
    return Volume(rng.normal(size=shape).astype(np.float32))
