import pytest

from accenteval.abx import SegmentFeatureProvider

from synthcorpus import build_synth_corpus


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """One synthetic corpus shared by the whole suite. Read-only."""
    return build_synth_corpus(tmp_path_factory.mktemp("synth"), seed=0)


@pytest.fixture(scope="session")
def provider(corpus):
    return SegmentFeatureProvider(corpus.manifest)
