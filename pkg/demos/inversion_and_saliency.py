"""Look inside a trained network: reconstruct records from the deepest layer and map saliency.

    python demos/inversion_and_saliency.py desk_out

Needs the output directory of a finished run (see desk_pipeline.py). Writes
one SVG per shown record into <out_dir>/demo/.
"""

import sys
from pathlib import Path

import numpy as np

from ecgxai import svgplot
from ecgxai.convnet import load_model, predict, semi_orth_residual
from ecgxai.inversion import inversion_defect
from ecgxai.saliency import instance_saliency
from ecgxai.signal import CNN_TEST, load_dataset


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "desk_out")
    net, hist = load_model(out / "cnn/model.json")
    ds = load_dataset(out / "data/split.json")
    print(f"net: {net.config}, trained {hist['epochs_run']} epochs (best {hist['best_epoch']})")
    for i, layer in enumerate(net.layers):
        print(f"layer {i}: semi-orthogonality residual {semi_orth_residual(layer):.1e}, "
              f"inversion defect {inversion_defect(layer):.3f}")

    demo = out / "demo"
    demo.mkdir(exist_ok=True)
    test = ds.indices_with_tag(CNN_TEST)
    for label in (0, 1):
        i = next(j for j in test if ds[j].label == label)
        rec = ds[i]
        sal, X_rec = instance_saliency(net, rec)
        s, s_rec = predict(net, rec.values[None])[0], predict(net, X_rec[None])[0]
        top = np.sort(sal.phi.ravel())[::-1][: sal.phi.size // 10]
        print(f"\n{rec.id} (label {label}): score {s:.3f}, score of reconstruction {s_rec:.3f}")
        print(f"  noise scale {sal.sigma_hat:.4f}, mean saliency {sal.phi.mean():.3f}, "
              f"top-decile mean {top.mean():.3f}")
        panel = np.vstack([rec.values, X_rec, sal.phi])
        names = ([f"{n} input" for n in rec.lead_names] + [f"{n} recon" for n in rec.lead_names]
                 + [f"{n} saliency" for n in rec.lead_names])
        svgplot.trace_panel(panel, demo / f"{rec.id}.svg", title=f"{rec.id} label {label}",
                            lead_names=names, width=900)
    print(f"\npanels written to {demo}")


if __name__ == "__main__":
    main()
