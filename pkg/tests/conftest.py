import pathlib
import sys

import pytest

TESTS_DIR = pathlib.Path(__file__).resolve().parent
if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))

PROBLEMS_DIR = TESTS_DIR.parent / "problems"

GOLDEN_NAMES = (
    "lp_basic",
    "lp_canonical",
    "lp_production",
    "lp_parametric",
    "socp_ball",
    "socp_reducible",
    "sdp_trace",
    "gp_reciprocal",
    "qp_box",
    "qp_saddle",
    "qcqp_ball",
    "conic_mixed",
    "nlp_smooth_convex",
    "nlp_double_well",
)


@pytest.fixture(scope="session")
def problems_dir() -> pathlib.Path:
    return PROBLEMS_DIR


def golden_text(name: str) -> str:
    return (PROBLEMS_DIR / f"{name}.optproblem.json").read_text(encoding="utf-8")
