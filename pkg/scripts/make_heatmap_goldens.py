"""Write the golden alignment record and its heatmaps to tests/golden/.

The record is built from closed-form scores (no RNG), normalized per
(target step, dimension) over source positions.
"""

from pathlib import Path

import numpy as np

from fgnmt.analysis import (
    AlignmentRecord,
    avg_over_dims,
    avg_over_target,
    heatmap,
    load_fgat,
    save_fgat,
    slice_dim,
)
from fgnmt.attention import Variant

OUT = Path(__file__).resolve().parent.parent / "tests" / "golden"


def golden_record() -> AlignmentRecord:
    Tp, T, D = 5, 6, 8
    tp, t, d = np.meshgrid(np.arange(Tp), np.arange(T), np.arange(D), indexing="ij")
    scores = 2.0 * np.cos(0.9 * (t - tp) + 0.4 * d) + 0.3 * np.sin(1.3 * d * t)
    alpha = np.exp(scores)
    alpha /= alpha.sum(axis=1, keepdims=True)
    source = ["the", "re@@", "public", "voted", "today", "."]
    target = ["die", "republik", "stimmte", "heute", "."]
    return AlignmentRecord(source, target, alpha, Variant.ATTY2D, "golden")


def render(rec: AlignmentRecord, out: Path) -> list[Path]:
    dims = [str(i) for i in range(rec.D)]
    return [
        heatmap(avg_over_dims(rec), out / "avg_dims.pgm", rec.target, rec.source),
        heatmap(avg_over_target(rec), out / "avg_target.pgm", rec.source, dims),
        heatmap(slice_dim(rec, 3), out / "slice3.pgm", rec.target, rec.source),
    ]


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    save_fgat(golden_record(), OUT / "record.fgat")
    # render from the stored f32 values so tests can reproduce from the file alone
    for path in render(load_fgat(OUT / "record.fgat"), OUT):
        print("wrote", path)


if __name__ == "__main__":
    main()
