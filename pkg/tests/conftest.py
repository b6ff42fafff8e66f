import pytest

from pimlite.device import DeviceConfig, PimDevice
from pimlite.management import ManagementContext

TEST_BANK_BYTES = 1 << 20  # keep memory small; geometry defaults stay real


def make_device(cores=2, bank_bytes=TEST_BANK_BYTES, **kw) -> PimDevice:
    return PimDevice(DeviceConfig(num_cores=cores, dram_bank_bytes=bank_bytes, **kw))


def make_mgmt(cores=2, bank_bytes=TEST_BANK_BYTES, **kw) -> ManagementContext:
    return ManagementContext(make_device(cores, bank_bytes, **kw))


@pytest.fixture
def mgmt() -> ManagementContext:
    return make_mgmt()
