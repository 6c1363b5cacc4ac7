"""Smoke test for the `prioritizer` extension module.

Build and install the module first:

    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml

then run `python python/smoke_test.py`.
"""

import json
import math
import random
import struct
import sys
import tempfile
from pathlib import Path

import prioritizer


def write_nnwb(path, tensors):
    """Writes {name: (shape, flat_values)} in the NNWB layout."""
    names = sorted(tensors)
    encoded = [n.encode() for n in names]
    header = 4 + 4 + 4
    for enc, n in zip(encoded, names):
        header += 4 + len(enc) + 1 + 1 + 4 * len(tensors[n][0]) + 8 + 8
    table, payload = b"", b""
    offset = header
    for enc, n in zip(encoded, names):
        shape, values = tensors[n]
        data = struct.pack(f"<{len(values)}f", *values)
        table += struct.pack("<I", len(enc)) + enc + struct.pack("<BB", 0, len(shape))
        table += struct.pack(f"<{len(shape)}I", *shape) + struct.pack("<QQ", offset, len(data))
        payload += data
        offset += len(data)
    Path(path).write_bytes(b"NNWB" + struct.pack("<II", 1, len(names)) + table + payload)


def build_model(tmp):
    rng = random.Random(0)
    w1 = [rng.uniform(-1, 1) for _ in range(8 * 4)]
    w2 = [rng.uniform(-1, 1) for _ in range(3 * 8)]
    manifest = {
        "name": "smoke",
        "task": "classification",
        "input_shape": [4],
        "layers": [
            {"kind": "dense", "name": "fc1", "in_dim": 4, "out_dim": 8,
             "weights": {"kernel": "fc1/kernel", "bias": "fc1/bias"}},
            {"kind": "relu", "name": "relu1"},
            {"kind": "dropout", "name": "drop1", "rate": 0.5},
            {"kind": "dense", "name": "fc2", "in_dim": 8, "out_dim": 3,
             "weights": {"kernel": "fc2/kernel", "bias": "fc2/bias"}},
            {"kind": "softmax", "name": "softmax"},
        ],
    }
    (tmp / "m.json").write_text(json.dumps(manifest))
    write_nnwb(tmp / "m.nnwb", {
        "fc1/kernel": ([8, 4], w1),
        "fc1/bias": ([8], [0.1] * 8),
        "fc2/kernel": ([3, 8], w2),
        "fc2/bias": ([3], [0.0] * 3),
    })
    return prioritizer.Model.load(str(tmp / "m.json"))


def main():
    # scalar helpers
    assert abs(prioritizer.entropy([0.7, 0.2, 0.1]) - 0.8018185525433373) < 1e-12
    assert prioritizer.entropy([1.0, 0.0]) == 0.0
    p = prioritizer.softmax([1.0, 2.0, 3.0])
    assert abs(sum(p) - 1.0) < 1e-12 and p[2] > p[1] > p[0]

    ideal = [min(k, 5) for k in range(1, 21)]
    assert prioritizer.apfd_score(ideal, 5) == 100.0
    curve = prioritizer.cumulative_error_curve([2, 0, 1], [True, False, False])
    assert curve == [1, 1, 2], curve
    assert prioritizer.rank_by_score([0.1, 0.9, 0.9, 0.5]) == [1, 2, 3, 0]
    assert prioritizer.select_top([0.1, 0.9, 0.9, 0.5], k=2) == [1, 2]
    assert prioritizer.select_top([0.1, 0.9, 0.9, 0.5], fraction=0.5) == [1, 2]
    assert prioritizer.derive_correctness([[1.25], [1.2500001]], [[1.0], [1.0]]) == [True, False]

    try:
        prioritizer.apfd_score([0, 0], 0)
    except prioritizer.PrioritizerError as e:
        assert "no_errors" in str(e), e
    else:
        raise AssertionError("m = 0 accepted")

    with tempfile.TemporaryDirectory() as d:
        tmp = Path(d)
        model = build_model(tmp)
        assert model.task == "classification" and model.input_shape == [4]
        assert model.has_dropout and model.output_len == 3

        rng = random.Random(1)
        inputs = [[rng.uniform(-2, 2) for _ in range(4)] for _ in range(50)]
        preds = model.predict(inputs)
        assert len(preds) == 50 and all(abs(sum(r) - 1.0) < 1e-5 for r in preds)

        soft = model.score(inputs, "softmax")
        assert all(0.0 <= s <= math.log(3) + 1e-9 for s in soft)
        drop = model.score(inputs, "dropout", samples=20, seed=7)
        assert drop == model.score(inputs, "dropout", samples=20, seed=7)

        traces, classes = model.traces(inputs)
        assert len(traces[0]) == 3 and len(classes) == 50
        index = prioritizer.DsaIndex(traces[:40], classes[:40])
        dsa = index.score(traces[40:], classes[40:])
        assert len(dsa) == 10 and all(s >= 0 for s in dsa)
        x_a, x_b, dist_a, dist_b, score = index.query(traces[0], classes[0])
        assert dist_a == 0.0 and score == 0.0

        labels = [rng.randrange(3) for _ in range(50)]
        correct = prioritizer.derive_correctness(preds, labels)
        errors = correct.count(False)
        perm = prioritizer.rank_by_score(soft)
        apfd = prioritizer.apfd_score(prioritizer.cumulative_error_curve(perm, correct), errors)
        assert 0.0 < apfd <= 100.0

        prioritizer.save_tensor(str(tmp / "x.tbin"), [50, 4], [v for row in inputs for v in row])
        shape, flat = prioritizer.load_tensor(str(tmp / "x.tbin"))
        assert shape == [50, 4] and len(flat) == 200
        prioritizer.save_classes(str(tmp / "y.tbin"), labels)
        assert prioritizer.load_classes(str(tmp / "y.tbin")) == labels

        model.save(str(tmp / "copy.json"), str(tmp / "copy.nnwb"))
        assert (tmp / "copy.nnwb").read_bytes() == (tmp / "m.nnwb").read_bytes()

    print(f"smoke test ok (apfd={apfd:.2f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
