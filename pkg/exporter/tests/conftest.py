import pytest

from seltmr_exporter import data as datasrc


@pytest.fixture(scope="session")
def digits_corpus():
    images, labels, source = datasrc.load_images(datasrc.DATA_DIGITS)
    assert source == "digits"
    return images, labels
