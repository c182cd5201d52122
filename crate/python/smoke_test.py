"""Smoke test for the h4d_py extension: runs a tiny CLI pipeline and exercises the bindings."""
import math
import os
import sys
import tempfile

import h4d_py


def frames(entry):
    shape, data = entry
    t, n = shape[0], shape[1]
    return [[data[(f * n + i) * 3:(f * n + i) * 3 + 3] for i in range(n)] for f in range(t)]


def cli(*args):
    code, out, err = h4d_py.run_cli([*args, "--threads", "1"])
    if code != 0:
        sys.exit(f"h4d {' '.join(args)} exited {code}: {err}")
    return out


def main():
    with tempfile.TemporaryDirectory() as d:
        p = lambda n: os.path.join(d, n)
        micro = ["--set", "preset=micro", "--set", "iterations=10"]
        cli("gen-data", "--seed", "7", "--out", p("data"), "--set", "preset=micro", "--set", "n_train=4", "--set", "n_test=1")
        cli("fit-lmm", "--data", p("data"), "--out", p("lmm.hta"))
        cli("train", "--stage", "1", "--data", p("data"), "--basis", p("lmm.hta"), "--out", p("ck.hta"), "--seed", "1", *micro)
        cli("reconstruct", "--ckpt", p("ck.hta"), "--data", p("data"), "--seq", "test:0", "--out", p("rec.hta"), "--truth", p("gt.hta"), "--seed", "3")

        rec, gt = h4d_py.load_archive(p("rec.hta")), h4d_py.load_archive(p("gt.hta"))
        assert rec["clothed"][0] == gt["clothed"][0], (rec["clothed"][0], gt["clothed"][0])
        mpjpe, pa, accel = h4d_py.joint_errors(frames(rec["joints"]), frames(gt["joints"]))
        assert 0.0 <= pa <= mpjpe + 1e-9 and math.isfinite(mpjpe)
        cd = h4d_py.chamfer(frames(rec["clothed"])[0], frames(gt["clothed"])[0])
        assert cd >= 0.0 and h4d_py.chamfer(frames(gt["clothed"])[0], frames(gt["clothed"])[0]) == 0.0

        ck = h4d_py.Checkpoint.load(p("ck.hta"))
        out = ck.reconstruct(frames(gt["clothed"]))
        assert out["clothed"][0] == gt["clothed"][0] and out["clothed"][0][1] == ck.n_vertices
        print(f"ok: stage {ck.stage}, mpjpe {mpjpe:.4f} m, pa-mpjpe {pa:.4f} m, chamfer {cd:.3e}")


if __name__ == "__main__":
    main()
