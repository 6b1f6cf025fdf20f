import os
from pathlib import Path

import numpy as np
import pytest

from polya_lm.simulate import synthetic_collection

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion for the terminal summary."""

    def add(criterion: str, passed: bool | None, detail: str = ""):
        status = {True: "PASS", False: "FAIL", None: "NOT RUN"}[passed]
        line = f"{criterion}: {status}" + (f" -- {detail}" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)

    return add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def synthetic_files(tmp_path_factory):
    """A small Cranfield-format collection written to disk."""
    root = tmp_path_factory.mktemp("synthetic")
    docs, queries, qrels = synthetic_collection(
        np.random.default_rng(7), vocab_size=200, n_topics=6, docs_per_topic=8, doc_length=(20, 50)
    )
    (root / "docs.txt").write_text(docs)
    (root / "queries.txt").write_text(queries)
    (root / "qrels.txt").write_text(qrels)
    return root


def collection_dir() -> Path | None:
    base = os.environ.get("POLYA_DATA_DIR")
    return Path(base) if base else None
