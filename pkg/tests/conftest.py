import numpy as np
import pytest

from sulcikit.volume import BinaryMask, IntensityVolume, LabelVolume, VoxelGrid


@pytest.fixture
def unit_grid():
    def make(shape, spacing=(1.0, 1.0, 1.0)):
        return VoxelGrid.from_spacing(shape, spacing)

    return make


@pytest.fixture
def mask_from(unit_grid):
    def make(array, spacing=(1.0, 1.0, 1.0)):
        array = np.asarray(array, dtype=bool)
        return BinaryMask(unit_grid(array.shape, spacing), array)

    return make


@pytest.fixture
def labels_from(unit_grid):
    def make(array, spacing=(1.0, 1.0, 1.0)):
        array = np.asarray(array)
        return LabelVolume(unit_grid(array.shape, spacing), array)

    return make


@pytest.fixture
def image_from(unit_grid):
    def make(array, spacing=(1.0, 1.0, 1.0)):
        array = np.asarray(array, dtype=np.float32)
        return IntensityVolume(unit_grid(array.shape, spacing), array)

    return make
