import numpy as np
import pytest

from gridner import checkpoint
from gridner.checkpoint import MAGIC, CheckpointError
from gridner.core import LabelSet
from gridner.data import Vocabulary
from gridner.model import forward
from conftest import perturbed_params


@pytest.fixture
def saved(toy_config):
    params = perturbed_params(toy_config)
    labels = LabelSet(("A", "B"))
    vocab = Vocabulary(("<pad>", "<unk>", *[f"t{k}" for k in range(10)]), 2)
    return params, toy_config, labels, vocab


def test_byte_exact_round_trip(saved):
    blob = checkpoint.dumps(*saved)
    assert blob.startswith(MAGIC)
    params, cfg, labels, vocab = checkpoint.loads(blob)
    assert (cfg, labels, vocab) == saved[1:]
    assert list(params) == list(saved[0])
    for k, t in saved[0].items():
        assert params[k].data.tobytes() == t.data.tobytes()
    assert checkpoint.dumps(params, cfg, labels, vocab) == blob


def test_file_round_trip_preserves_outputs(tmp_path, saved):
    path = tmp_path / "m.bin"
    checkpoint.save(path, *saved)
    params, cfg, *_ = checkpoint.load(path)
    a = forward([1, 2, 3], saved[0], saved[1]).y
    b = forward([1, 2, 3], params, cfg).y
    assert a.tobytes() == b.tobytes()


def test_without_vocab(saved):
    params, cfg, labels, _ = saved
    assert checkpoint.loads(checkpoint.dumps(params, cfg, labels))[3] is None


def test_special_values_survive(saved):
    params, cfg, labels, vocab = saved
    params["cln_bb"].data[:3] = [-0.0, 5e-324, np.finfo(float).max]
    back = checkpoint.loads(checkpoint.dumps(params, cfg, labels, vocab))[0]
    assert back["cln_bb"].data.tobytes() == params["cln_bb"].data.tobytes()


@pytest.mark.parametrize("mangle", [
    lambda b: b"NOTGRID" + b[7:],
    lambda b: b[:-3],
    lambda b: b + b"\0",
])
def test_corrupt(saved, mangle):
    with pytest.raises(CheckpointError):
        checkpoint.loads(mangle(checkpoint.dumps(*saved)))
