# Copyright 2026 The cvnmt Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Smoke test for the pycvnmt extension module.

Build with `maturin develop -m crates/python/Cargo.toml`, or copy
target/debug/libpycvnmt.so to pycvnmt.so somewhere on PYTHONPATH.
"""

import math
import os
import tempfile

import pycvnmt


def main():
    assert abs(pycvnmt.kl_diag_gauss([1.0], [0.0], [0.0], [0.0]) - 0.5) < 1e-12
    assert pycvnmt.kl_warmup_alpha(1) == 0.0
    assert abs(pycvnmt.ppl_from_nelbo(1.0) - math.e) < 1e-12
    assert pycvnmt.corpus_bleu(["a b c d"], ["a b c d"]) == 1.0

    train = pycvnmt.synth_corpus("copy", 32, 8, seed=1)
    val = pycvnmt.synth_corpus("copy", 8, 8, seed=2)
    vocab = pycvnmt.Vocabulary.build([s for s, _ in train])
    s = train[0][0]
    assert vocab.decode(vocab.encode(s)) == s

    cfg = {"d_emb": "8", "d_hid": "8", "d_z": "4", "layers": "1", "batch_size": "4"}
    t = pycvnmt.Trainer(train, val, cfg)
    r = t.run_epoch()
    assert r["epoch"] == 1 and math.isfinite(r["val_nelbo"])

    out = t.translate(s)
    assert out == t.translate(s, beam=1)
    ranked = t.sample(s, n=5, seed=3)
    assert all(a[0] >= b[0] for a, b in zip(ranked, ranked[1:]))
    assert len(t.interpolate(s, steps=3)) == 3
    row = t.evaluate(val, beam=2)
    assert 0.0 <= row["bleu_beam"] <= 1.0

    solo = pycvnmt.Trainer(train, None, cfg)
    assert "val_re" not in solo.run_epoch()

    with tempfile.TemporaryDirectory() as d:
        p = os.path.join(d, "m.ckpt")
        t.save(p)
        u = pycvnmt.Trainer.load(p, train, val)
        assert u.epoch == 1 and u.translate(s) == out
        try:
            pycvnmt.Trainer.load(os.path.join(d, "missing.ckpt"))
        except OSError:
            pass
        else:
            raise AssertionError("missing checkpoint loaded")
    print("pycvnmt smoke test ok")


if __name__ == "__main__":
    main()
