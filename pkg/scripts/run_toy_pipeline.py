"""Run the full CLI pipeline on the synthetic toy scene.

    python3 scripts/run_toy_pipeline.py OUT_DIR [--seed 7] [--views 5]

Stages: toy scene -> mesh -> texture -> render a 10 m trajectory ->
sample-temporal with replayed noise predictions -> metrics.
"""

import argparse
from pathlib import Path

import numpy as np

from groundsynth import cli, fileio, sampler, toy


def run(out: Path, seed: int = 7, views: int = 5, steps: int = 20, size: int = 256, codec: str = "downscale:8") -> Path:
    out.mkdir(parents=True, exist_ok=True)
    scene = toy.write_toy_scene(out / "scene")
    cams = str(scene["cameras"])

    # Replayed noise predictions stand in for a trained network.
    factor = sampler.codec_from_name(codec).factor
    block = (views, 3, size // factor, size // factor)
    preds = 0.1 * np.random.default_rng(seed).standard_normal((steps,) + block)
    fileio.write_tensor(out / "predictions.tensor", preds)

    start = ",".join(repr(float(v)) for v in toy.street_start())
    stages = [
        ["mesh", "--cameras", cams, "--out", str(out / "mesh" / "mesh.obj")],
        ["texture", "--mesh", str(out / "mesh" / "mesh.obj"), "--cameras", cams, "--out", str(out / "mesh" / "textured.obj")],
        ["render", "--mesh", str(out / "mesh" / "textured.obj"), "--start", start, "--heading", "0",
         "--spacing", "10", "--count", str(views), "--size", str(size), "--out", str(out / "render")],
        ["sample-temporal", "--init", str(out / "render" / "frame_0000.png"), "--views", str(views),
         "--steps", str(steps), "--seed", str(seed), "--codec", codec,
         "--predictions", str(out / "predictions.tensor"), "--out", str(out / "sample")],
        ["metrics", "--reference", str(out / "render"), "--candidate", str(out / "sample"),
         "--depths", str(out / "render"), "--cameras", str(out / "render" / "cameras.cams"),
         "--out", str(out / "metrics")],
    ]
    for argv in stages:
        code = cli.main(argv)
        if code:
            raise SystemExit(f"stage {argv[0]} failed with exit code {code}")
    return out


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--views", type=int, default=5)
    args = ap.parse_args()
    run(Path(args.out), args.seed, args.views)
