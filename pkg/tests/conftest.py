import sys
from pathlib import Path

import pytest

# make `import oracles` work no matter where pytest is invoked from
sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def meet_table_r1():
    """Shared d=3, R=1 visit-count table (one build per session)."""
    from voterperc import walks
    return walks.meet_probability_table(3, 1, box_r=6, n=30_000, seed=9)
