import pytest

from ctxpatch import corpus
from ctxpatch.pipeline import PatchOptions, patch_contract


@pytest.fixture(scope="session")
def fixtures():
    return {fx.name: fx for fx in corpus.all_fixtures()}


@pytest.fixture(scope="session")
def patched(fixtures):
    """name -> (patched bytes, PatchReport) for every corpus fixture."""
    return {name: patch_contract(fx.code, fx.bugs, PatchOptions(contract_id=name))
            for name, fx in fixtures.items()}
