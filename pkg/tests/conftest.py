import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from deskdata import make_corpus, write_jsonl  # noqa: E402

from vulnalign.cli import main  # noqa: E402


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """Full pipeline on the synthetic marker corpus; shared across tests."""
    out = tmp_path_factory.mktemp("desk")
    train, evals = make_corpus(n_train=120, n_eval_vuln=40, seed=0)
    paths = {
        "dir": out,
        "train": out / "train.jsonl",
        "eval": out / "eval.jsonl",
        "vocab": out / "vocab.json",
        "checkpoint": out / "model.ckpt",
        "groundtruth": out / "groundtruth.jsonl",
        "relevance": out / "relevance.jsonl",
        "results": out / "results.jsonl",
        "summary": out / "summary.json",
    }
    write_jsonl(train, paths["train"])
    write_jsonl(evals, paths["eval"])
    o = ["--out-dir", str(out)]
    assert main(["train-vocab", "--dataset", str(paths["train"]),
                 "--vocab-size", "300"] + o) == 0
    assert main(["extract-gt", "--dataset", str(paths["eval"])] + o) == 0
    assert main(["train-model", "--dataset", str(paths["train"]),
                 "--vocab", str(paths["vocab"]), "--dim", "16", "--heads", "2",
                 "--layers", "2", "--d-ff", "32", "--epochs", "6",
                 "--learning-rate", "0.15", "--seed", "0"] + o) == 0
    assert main(["score", "--dataset", str(paths["eval"]),
                 "--vocab", str(paths["vocab"]),
                 "--checkpoint", str(paths["checkpoint"]),
                 "--ig-steps", "32"] + o) == 0
    assert main(["evaluate", "--relevance", str(paths["relevance"]),
                 "--groundtruth", str(paths["groundtruth"]),
                 "--dataset", str(paths["eval"])] + o) == 0
    return paths
