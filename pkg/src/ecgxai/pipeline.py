"""Stage-by-stage orchestration of the explainable ECG pipeline.

Every stage reads the artifacts of earlier stages from one output
directory and writes its own. Stages, in order::

    synth -> preprocess -> split -> grid-search -> train-cnn -> invert
    -> saliency -> roar -> kshape -> extract -> fit-lr -> importance -> lrt -> report

``grid-search`` may be skipped when the CNN grid holds a single cell.
"""

from __future__ import annotations

import csv
import json
import logging
import shutil
import warnings
from pathlib import Path

import numpy as np

from . import convnet, glm, shapefeat, svgplot
from .config import config_hash
from .evalmetrics import IsotonicMap, evaluate, isotonic_calibrate, summarize
from .exceptions import StageOrderError
from .inversion import reconstruct
from .resample import smoteenn
from .saliency import instance_saliency, roar_curve
from .signal import (
    CNN_TEST,
    LR_HALF,
    Dataset,
    NoiseConfig,
    load_dataset,
    make_dataset,
    preprocess,
    save_dataset,
    split_dataset,
)

logger = logging.getLogger(__name__)

STAGES = ["synth", "preprocess", "split", "grid-search", "train-cnn", "invert", "saliency",
          "roar", "kshape", "extract", "fit-lr", "importance", "lrt", "report"]

ARTIFACTS = {
    "synth": "data/raw.json",
    "preprocess": "data/clean.json",
    "split": "data/split.json",
    "grid-search": "cnn/grid.json",
    "train-cnn": "cnn/model.json",
    "invert": "inversion/scores.csv",
    "saliency": "saliency/maps.npz",
    "roar": "roar/roar.csv",
    "kshape": "kshape/centroids.json",
    "extract": "features/features.npz",
    "fit-lr": "lr/model.json",
    "importance": "lr/importance.csv",
    "lrt": "lr/lrt.csv",
    "report": "report/provenance.json",
}


def _need(out: Path, stage: str) -> Path:
    path = out / ARTIFACTS[stage]
    if not path.exists():
        raise StageOrderError(f"run stage {stage} first (missing {ARTIFACTS[stage]})")
    return path


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True))


def _read_json(path: Path):
    return json.loads(Path(path).read_text())


# data

def stage_synth(cfg: dict, out: Path) -> dict:
    d, s = cfg["data"], cfg["synth"]
    path = out / ARTIFACTS["synth"]
    path.parent.mkdir(parents=True, exist_ok=True)
    if d["path"]:
        ds = load_dataset(d["path"], d["format"])
    else:
        noise = NoiseConfig(s["powerline_hz"], s["powerline_amp"], s["wander_hz"],
                            s["wander_amp"], s["white_sigma"])
        ds = make_dataset(d["n_instances"], d["pathology"], d["positive_fraction"], d["n_leads"],
                          d["sample_rate_hz"], d["duration_s"], cfg["seeds"]["data"], noise)
    save_dataset(ds, path)
    return {"n_instances": len(ds), "n_positive": int(ds.labels.sum())}


def stage_preprocess(cfg: dict, out: Path) -> dict:
    ds = load_dataset(_need(out, "synth"))
    clean = Dataset([preprocess(x) for x in ds], ds.split_tags)
    save_dataset(clean, out / ARTIFACTS["preprocess"])
    return {"n_instances": len(clean)}


def stage_split(cfg: dict, out: Path) -> dict:
    ds = load_dataset(_need(out, "preprocess"))
    d = cfg["data"]
    tagged = split_dataset(ds, cfg["seeds"]["split"], d["n_folds"], d["test_fraction"])
    save_dataset(tagged, out / ARTIFACTS["split"])
    _write_csv(out / "data/split_tags.csv", ["id", "tag"],
               ((x.id, t) for x, t in zip(tagged, tagged.split_tags)))
    counts = {t: tagged.split_tags.count(t) for t in sorted(set(tagged.split_tags))}
    return {"counts": counts}


def _split(out: Path) -> Dataset:
    return load_dataset(_need(out, "split"))


def lr_partition(ds: Dataset, seed: int, test_fraction: float) -> tuple[np.ndarray, np.ndarray]:
    """Stratified train/test indices inside the LR half."""
    idx = ds.indices_with_tag(LR_HALF)
    y = ds.labels[idx]
    rng = np.random.default_rng(seed)
    test = []
    for cls in (0, 1):
        members = idx[y == cls]
        members = members[rng.permutation(len(members))]
        test.extend(members[:int(round(test_fraction * len(members)))])
    test = np.array(sorted(test), dtype=int)
    train = np.array([i for i in idx if i not in set(test.tolist())], dtype=int)
    return train, test


# CNN

def train_config(cfg: dict) -> convnet.TrainConfig:
    c = cfg["cnn"]
    return convnet.TrainConfig(
        lr0=c["lr0"], decay=c["decay"], max_epochs=c["max_epochs"], patience=c["patience"],
        batch_size=c["batch_size"], seed=cfg["seeds"]["resample"], min_delta=c["min_delta"],
        proj_iters=c["proj_iters"], resample=c["resample"],
    )


def _grid(cfg: dict) -> dict:
    c = cfg["cnn"]
    return {"filters": c["filters"], "kernel": c["kernel"], "deepness": c["deepness"]}


def stage_grid_search(cfg: dict, out: Path) -> dict:
    ds = _split(out)
    X, y = ds.arrays()
    folds = cfg["cnn"]["grid_folds"]
    folds = list(range(ds.n_folds)) if folds is None else folds
    tcfg = train_config(cfg)
    results = []
    for f, k, d in [(f, k, d) for f in cfg["cnn"]["filters"] for k in cfg["cnn"]["kernel"]
                    for d in cfg["cnn"]["deepness"]]:
        nc = convnet.NetConfig(f, k, d, X.shape[1], X.shape[2])
        row = {"filters": f, "kernel": k, "deepness": d}
        if not nc.feasible():
            results.append({**row, "status": "infeasible", "n_params": None})
            continue
        net0 = convnet.init_net(nc, cfg["seeds"]["cnn"], zero_head=cfg["cnn"]["zero_head"])
        per_fold = []
        for fold in folds:
            net, _ = convnet.train(net0, ds, tcfg, fold)
            _, va = ds.fold_indices(fold)
            per_fold.append(evaluate(convnet.predict(net, X[va]), y[va]))
        results.append({**row, "status": "ok", "n_params": net0.n_params(),
                        "per_fold": per_fold, "summary": summarize(per_fold)})
        logger.info("grid %s: 3MCS %.3f", row, results[-1]["summary"]["3mcs"]["mean"])
    best = convnet.select_best(results)
    _write_json(out / ARTIFACTS["grid-search"], {"results": results, "best": best})
    rows = []
    for r in results:
        if r["status"] != "ok":
            rows.append([r["filters"], r["kernel"], r["deepness"], r["status"], "", "", "", ""])
            continue
        s = r["summary"]
        rows.append([r["filters"], r["kernel"], r["deepness"], "ok", r["n_params"],
                     s["3mcs"]["mean"], s["3mcs"]["sd"], s["auroc"]["mean"]])
    _write_csv(out / "cnn/grid.csv", ["filters", "kernel", "deepness", "status", "n_params",
                                      "3mcs_mean", "3mcs_sd", "auroc_mean"], rows)
    return {"best": {k: best[k] for k in ("filters", "kernel", "deepness")}}


def _chosen_cell(cfg: dict, out: Path) -> dict:
    grid_path = out / ARTIFACTS["grid-search"]
    if grid_path.exists():
        best = _read_json(grid_path)["best"]
        return {k: best[k] for k in ("filters", "kernel", "deepness")}
    g = _grid(cfg)
    if all(len(v) == 1 for v in g.values()):
        return {k: v[0] for k, v in g.items()}
    raise StageOrderError("run stage grid-search first (the CNN grid has several cells)")


def stage_train_cnn(cfg: dict, out: Path) -> dict:
    ds = _split(out)
    cell = _chosen_cell(cfg, out)
    X, y = ds.arrays()
    nc = convnet.NetConfig(cell["filters"], cell["kernel"], cell["deepness"], X.shape[1], X.shape[2])
    net0 = convnet.init_net(nc, cfg["seeds"]["cnn"], zero_head=cfg["cnn"]["zero_head"])
    fold = cfg["cnn"]["final_fold"]
    net, hist = convnet.train(net0, ds, train_config(cfg), fold)
    _, va = ds.fold_indices(fold)
    cal = isotonic_calibrate(convnet.predict(net, X[va]), y[va])
    hist["calibration"] = {"x": cal.x.tolist(), "y": cal.y.tolist()}
    hist["fold"] = fold
    path = out / ARTIFACTS["train-cnn"]
    path.parent.mkdir(parents=True, exist_ok=True)
    convnet.save_model(net, path, hist)
    te = ds.indices_with_tag(CNN_TEST)
    metrics = evaluate(convnet.predict(net, X[te]), y[te], cal)
    _write_csv(out / "cnn/test_metrics.csv", ["metric", "value"], sorted(metrics.items()))
    _write_csv(out / "cnn/history.csv", ["epoch", "train_loss", "val_loss", "lr"],
               zip(range(1, hist["epochs_run"] + 1), hist["train_loss"], hist["val_loss"], hist["lr"]))
    return {"cell": cell, "epochs": hist["epochs_run"], "best_epoch": hist["best_epoch"],
            "test": metrics}


def _model(out: Path):
    net, hist = convnet.load_model(_need(out, "train-cnn"))
    cal = IsotonicMap(np.array(hist["calibration"]["x"]), np.array(hist["calibration"]["y"]))
    return net, cal


def stage_invert(cfg: dict, out: Path) -> dict:
    ds = _split(out)
    net, _ = _model(out)
    X, y = ds.arrays()
    te = ds.indices_with_tag(CNN_TEST)
    s = convnet.predict(net, X[te])
    rec = reconstruct(net, convnet.forward_batch(net, X[te]), cfg["saliency"]["unpool_fill"])
    s_rec = convnet.predict(net, rec)
    _write_csv(out / ARTIFACTS["invert"], ["id", "label", "score", "score_reconstructed", "abs_diff"],
               ([ds[i].id, int(y[i]), a, b, abs(a - b)] for i, a, b in zip(te, s, s_rec)))
    return {"mean_abs_score_diff": float(np.mean(np.abs(s - s_rec)))}


def stage_saliency(cfg: dict, out: Path) -> dict:
    ds = _split(out)
    net, _ = _model(out)
    X, _ = ds.arrays()
    te = ds.indices_with_tag(CNN_TEST)
    lr = ds.indices_with_tag(LR_HALF)
    fill = cfg["saliency"]["unpool_fill"]
    maps_te = np.stack([instance_saliency(net, X[i], fill)[0].phi for i in te])
    maps_lr = np.stack([instance_saliency(net, X[i], fill)[0].phi for i in lr])
    path = out / ARTIFACTS["saliency"]
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, test_index=te, test=maps_te, lr_index=lr, lr=maps_lr)
    csv_dir = out / "saliency/csv"
    csv_dir.mkdir(exist_ok=True)
    for i, m in zip(te, maps_te):
        _write_csv(csv_dir / f"{ds[i].id}.csv", ds[i].lead_names, m.T)
    return {"n_test": len(te), "n_lr": len(lr)}


def _maps(out: Path):
    return np.load(_need(out, "saliency"))


def stage_roar(cfg: dict, out: Path) -> dict:
    ds = _split(out)
    net, _ = _model(out)
    maps = _maps(out)
    X, y = ds.arrays()
    te = maps["test_index"]
    fractions = cfg["saliency"]["roar_fractions"]
    rows = roar_curve(net, X[te], y[te], fractions, maps=list(maps["test"]), seed=cfg["seeds"]["roar"])
    _write_csv(out / ARTIFACTS["roar"], ["fraction", "auroc_salient", "auroc_random"],
               ([r["fraction"], r["auroc_salient"], r["auroc_random"]] for r in rows))
    fr = [r["fraction"] for r in rows]
    svgplot.line_plot({"saliency-guided": (fr, [r["auroc_salient"] for r in rows]),
                       "random": (fr, [r["auroc_random"] for r in rows])},
                      out / "roar/roar.svg", title="ROAR occlusion", xlabel="fraction occluded",
                      ylabel="AUROC", ylim=(0.0, 1.0))
    pos = [r for r in rows if r["fraction"] > 0]
    return {"mean_salient": float(np.mean([r["auroc_salient"] for r in pos])) if pos else None,
            "mean_random": float(np.mean([r["auroc_random"] for r in pos])) if pos else None}


# shape features

def _segment_len(cfg: dict, ds: Dataset) -> int:
    return int(round(cfg["kshape"]["L_seconds"] * ds[0].sample_rate_hz))


def stage_kshape(cfg: dict, out: Path) -> dict:
    ds = _split(out)
    maps = _maps(out)
    X, _ = ds.arrays()
    train, _ = lr_partition(ds, cfg["seeds"]["lr"], cfg["data"]["lr_test_fraction"])
    pos = {int(i): j for j, i in enumerate(maps["lr_index"])}
    L = _segment_len(cfg, ds)
    segs = np.stack([shapefeat.most_salient_segment(X[i], maps["lr"][pos[int(i)]], L) for i in train])
    K = min(cfg["kshape"]["K"], len(segs))
    res = shapefeat.kshape_fit(segs, K, seed=cfg["seeds"]["kshape"],
                               max_iter=cfg["kshape"]["max_iter"], L_seconds=cfg["kshape"]["L_seconds"])
    doc = {"L_seconds": cfg["kshape"]["L_seconds"], "n_iter": res.n_iter, "converged": res.converged,
           "objective": res.objective_history, "labels": res.labels.tolist(),
           "centroids": [{"cluster_id": c.cluster_id, "member_count": c.member_count,
                          "values": c.values.tolist()} for c in res.centroids]}
    _write_json(out / ARTIFACTS["kshape"], doc)
    cdir = out / "kshape/centroids"
    cdir.mkdir(parents=True, exist_ok=True)
    for c in res.centroids:
        _write_csv(cdir / f"centroid_{c.cluster_id:02d}.csv", ds[0].lead_names, c.values.T)
        svgplot.trace_panel(c.values, cdir / f"centroid_{c.cluster_id:02d}.svg",
                            title=f"centroid {c.cluster_id} ({c.member_count} segments)",
                            lead_names=ds[0].lead_names)
    _write_csv(out / "kshape/objective.csv", ["iteration", "objective"],
               enumerate(res.objective_history, 1))
    return {"K": K, "n_segments": len(segs), "n_iter": res.n_iter, "converged": res.converged}


def _centroids(out: Path) -> list[shapefeat.ShapeCentroid]:
    doc = _read_json(_need(out, "kshape"))
    return [shapefeat.ShapeCentroid(np.array(c["values"]), doc["L_seconds"], c["cluster_id"],
                                    c["member_count"]) for c in doc["centroids"]]


def stage_extract(cfg: dict, out: Path) -> dict:
    ds = _split(out)
    cents = _centroids(out)
    X, y = ds.arrays()
    train, test = lr_partition(ds, cfg["seeds"]["lr"], cfg["data"]["lr_test_fraction"])
    fit = shapefeat.extract_features(X[train], cents)
    held = shapefeat.extract_features(X[test], cents, fit.model)
    m = fit.model
    path = out / ARTIFACTS["extract"]
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, train_index=train, test_index=test,
             presence_train=fit.presence, presence_test=held.presence,
             kpca_train=fit.kpca, kpca_test=held.kpca,
             kpca_mean=m.mean, kpca_scale=m.scale, kpca_train_z=m.train, kpca_gamma=m.gamma,
             kpca_alphas=m.alphas, kpca_eigenvalues=m.eigenvalues)
    K = len(cents)
    header = ["id", "label", "part"] + [f"presence_{k}" for k in range(K)] + [f"kpca_{k}" for k in range(K)]
    rows = []
    for part, idx, fs in (("train", train, fit), ("test", test, held)):
        for r, i in enumerate(idx):
            rows.append([ds[i].id, int(y[i]), part, *fs.presence[r], *fs.kpca[r]])
    _write_csv(out / "features/features.csv", header, rows)
    return {"n_train": len(train), "n_test": len(test), "K": K, "gamma": m.gamma}


def _features(out: Path):
    f = np.load(_need(out, "extract"))
    model = shapefeat.KPCAModel(f["kpca_mean"], f["kpca_scale"], f["kpca_train_z"],
                                float(f["kpca_gamma"]), f["kpca_alphas"], f["kpca_eigenvalues"],
                                f["kpca_train"])
    return f, model


def _feature_names(K: int) -> list[str]:
    return [f"kpca_{k}" for k in range(K)]


def _lr_training_set(P, y, model, resample: bool, seed: int):
    """Optionally rebalance presence vectors, then project them with the fixed KPCA."""
    if resample and np.unique(y).size == 2 and min(np.bincount(y)) >= 2:
        P, y = smoteenn(P, y, seed=seed)
    return shapefeat.kpca_transform(model, P), y


def _stratified_folds(y: np.ndarray, n_folds: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    fold = np.zeros(len(y), dtype=int)
    for cls in (0, 1):
        members = np.flatnonzero(y == cls)
        members = members[rng.permutation(len(members))]
        fold[members] = np.arange(len(members)) % n_folds
    return fold


def _cv_predictions(f, model, ytr: np.ndarray, lam: float, cfg: dict):
    """Out-of-fold LR scores on the LR training rows and per-fold metrics."""
    lcfg = cfg["lr"]
    Ptr, Ztr = f["presence_train"], f["kpca_train"]
    names = _feature_names(Ptr.shape[1])
    folds = _stratified_folds(ytr, lcfg["cv_folds"], cfg["seeds"]["lr"])
    pred = np.zeros(len(ytr))
    per_fold = []
    for k in range(lcfg["cv_folds"]):
        fit_idx, val_idx = folds != k, folds == k
        Ffit, yfit = _lr_training_set(Ptr[fit_idx], ytr[fit_idx], model,
                                      lcfg["resample"], cfg["seeds"]["resample"])
        m = glm.lr_fit(Ffit, yfit, lam, names)
        pred[val_idx] = glm.lr_predict(m, Ztr[val_idx])
        per_fold.append(evaluate(pred[val_idx], ytr[val_idx]))
    return pred, summarize(per_fold)


def _fit_and_test(f, model, ytr, yte, lam: float, oof: np.ndarray, cfg: dict):
    Ffit, yfit = _lr_training_set(f["presence_train"], ytr, model, cfg["lr"]["resample"],
                                  cfg["seeds"]["resample"])
    final = glm.lr_fit(Ffit, yfit, lam, _feature_names(f["presence_train"].shape[1]))
    cal = isotonic_calibrate(oof, ytr)
    return final, cal, evaluate(glm.lr_predict(final, f["kpca_test"]), yte, cal)


def stage_fit_lr(cfg: dict, out: Path) -> dict:
    ds = _split(out)
    f, model = _features(out)
    ytr, yte = ds.labels[f["train_index"]], ds.labels[f["test_index"]]
    cv_rows, oof = [], {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for lam in cfg["lr"]["lambda"]:
            oof[lam], s = _cv_predictions(f, model, ytr, lam, cfg)
            cv_rows.append([lam, s["3mcs"]["mean"], s["3mcs"]["sd"], s["auroc"]["mean"]])
        lam = max(cv_rows, key=lambda r: (r[1], r[0]))[0]
        final, cal, metrics = _fit_and_test(f, model, ytr, yte, lam, oof[lam], cfg)
    doc = {"model": final.to_dict(), "calibration": {"x": cal.x.tolist(), "y": cal.y.tolist()},
           "test": metrics, "lambda": lam}
    _write_json(out / ARTIFACTS["fit-lr"], doc)
    _write_csv(out / "lr/cv.csv", ["lambda", "3mcs_mean", "3mcs_sd", "auroc_mean"], cv_rows)
    _write_csv(out / "lr/coefficients.csv", ["feature", "weight"],
               [["intercept", final.intercept]]
               + [[n, w] for n, w in zip(final.feature_names, final.weights)])
    _write_csv(out / "lr/test_metrics.csv", ["metric", "value"], sorted(metrics.items()))
    return {"lambda": lam, "test": metrics}


def stage_sensitivity(cfg: dict, out: Path, K_grid=None, L_grid=None) -> dict:
    """LR test metrics over a grid of centroid counts, segment lengths and ridge strengths.

    Each (K, L) cell re-runs clustering and feature extraction in its own
    subdirectory, reusing the split and the saliency maps of ``out``.
    """
    split_path, maps_path = _need(out, "split"), _need(out, "saliency")
    K_grid = K_grid or [cfg["kshape"]["K"]]
    L_grid = L_grid or [cfg["kshape"]["L_seconds"]]
    rows = []
    for K in K_grid:
        for L in L_grid:
            sub = out / "sensitivity" / f"K{K}_L{L:g}"
            for rel, src in ((ARTIFACTS["split"], split_path), (ARTIFACTS["saliency"], maps_path)):
                (sub / rel).parent.mkdir(parents=True, exist_ok=True)
                shutil.copyfile(src, sub / rel)
            cell = {**cfg, "kshape": {**cfg["kshape"], "K": K, "L_seconds": float(L)}}
            stage_kshape(cell, sub)
            stage_extract(cell, sub)
            ds = _split(sub)
            f, model = _features(sub)
            ytr, yte = ds.labels[f["train_index"]], ds.labels[f["test_index"]]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                for lam in cfg["lr"]["lambda"]:
                    oof, _ = _cv_predictions(f, model, ytr, lam, cell)
                    _, _, m = _fit_and_test(f, model, ytr, yte, lam, oof, cell)
                    rows.append([K, L, lam, m["auroc"], m["auprc"], m["mcc"], m["3mcs"]])
    _write_csv(out / "sensitivity/sensitivity.csv",
               ["K", "L_seconds", "lambda", "auroc", "auprc", "mcc", "3mcs"], rows)
    best = max(rows, key=lambda r: r[-1])
    return {"n_cells": len(rows), "best": {"K": best[0], "L_seconds": best[1], "lambda": best[2],
                                           "3mcs": best[-1]}}


def _lr_model(out: Path) -> glm.LRModel:
    return glm.LRModel.from_dict(_read_json(_need(out, "fit-lr"))["model"])


def stage_importance(cfg: dict, out: Path) -> dict:
    ds = _split(out)
    f, _ = _features(out)
    model = _lr_model(out)
    y = ds.labels
    imp = glm.permutation_importance(model, f["kpca_test"], y[f["test_index"]],
                                     cfg["lr"]["importance_repeats"], cfg["seeds"]["importance"])
    names = model.feature_names
    _write_csv(out / ARTIFACTS["importance"], ["feature", "importance"], zip(names, imp))
    svgplot.bar_chart(names, imp, out / "lr/importance.svg", title="Permutation importance",
                      ylabel="relative log-loss increase")
    # rank correlation of each KPCA feature with each centroid presence (training rows)
    P, Z = f["presence_train"], f["kpca_train"]
    K = P.shape[1]
    rho = np.zeros((Z.shape[1], K))
    pval = np.ones_like(rho)
    rows = []
    for a in range(Z.shape[1]):
        for b in range(K):
            try:
                rho[a, b], pval[a, b] = glm.spearman(Z[:, a], P[:, b])
            except ValueError:
                rho[a, b], pval[a, b] = np.nan, np.nan
            rows.append([names[a], f"presence_{b}", rho[a, b], pval[a, b]])
    _write_csv(out / "lr/spearman.csv", ["kpca_feature", "presence", "rho", "p_value"], rows)
    svgplot.heatmap(np.nan_to_num(rho), names, [f"c{b}" for b in range(K)],
                    out / "lr/spearman.svg", title="Spearman rho: KPCA features vs presences")
    top = int(np.argmax(imp))
    return {"top_feature": names[top], "top_importance": float(imp[top])}


# below this negative log-likelihood the LR training rows count as linearly separated
SEPARATION_LOGLIK = 1e-3


def stage_lrt(cfg: dict, out: Path) -> dict:
    ds = _split(out)
    f, _ = _features(out)
    doc = _read_json(_need(out, "fit-lr"))
    tr = f["train_index"]
    y = ds.labels[tr]
    Z = f["kpca_train"]
    age = np.array([np.nan if ds[i].age is None else ds[i].age for i in tr], dtype=float)
    sex = np.array([np.nan if ds[i].sex is None else ds[i].sex for i in tr], dtype=float)
    if np.isnan(age).any() or np.isnan(sex).any():
        raise ValueError("age and sex are required for every LR record")
    age_z = (age - age.mean()) / (age.std() or 1.0)
    names = _feature_names(Z.shape[1])
    full_names = names + ["age", "sex"]
    full_F = np.column_stack([Z, age_z, sex])
    lcfg = cfg["lr"]
    penalized = False
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        reduced = glm.lr_fit(Z, y, 0.0, names)
        full = glm.lr_fit(full_F, y, 0.0, full_names)
    separated = -glm.log_likelihood(reduced.weights, reduced.intercept, Z, y) < SEPARATION_LOGLIK
    if caught or separated or not (reduced.converged and full.converged):
        # separable data: the unpenalized maximum does not exist, use the shared ridge
        penalized = True
        lam = doc["lambda"]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            reduced = glm.lr_fit(Z, y, lam, names)
            full = glm.lr_fit(full_F, y, lam, full_names)
    res = glm.lrt(reduced, full, full_F, y, lcfg["alpha"], lcfg["n_tests"], full_names)
    res["penalized"] = penalized
    res["lambda_fit"] = reduced.lambda_ridge
    _write_csv(out / ARTIFACTS["lrt"], ["lambda_lr", "p_value", "reject", "alpha_adjusted",
                                        "loglik_reduced", "loglik_full", "penalized"],
               [[res["lambda_lr"], res["p_value"], res["reject"], lcfg["alpha"] / lcfg["n_tests"],
                 res["loglik_reduced"], res["loglik_full"], penalized]])
    return {k: res[k] for k in ("lambda_lr", "p_value", "reject", "penalized")}


# report

def stage_report(cfg: dict, out: Path) -> dict:
    for stage in ("train-cnn", "invert", "roar", "kshape", "fit-lr", "importance", "lrt"):
        _need(out, stage)
    rep = out / "report"
    if rep.exists():
        shutil.rmtree(rep)
    rep.mkdir(parents=True)
    lr_doc = _read_json(out / ARTIFACTS["fit-lr"])
    rows = []
    with open(out / "cnn/test_metrics.csv") as fh:
        for r in csv.DictReader(fh):
            rows.append(["cnn", r["metric"], r["value"]])
    for k, v in sorted(lr_doc["test"].items()):
        rows.append(["lr", k, repr(float(v))])
    with open(out / ARTIFACTS["invert"]) as fh:
        diffs = [float(r["abs_diff"]) for r in csv.DictReader(fh)]
    rows.append(["inversion", "mean_abs_score_diff", repr(float(np.mean(diffs)))])
    _write_csv(rep / "metrics.csv", ["model", "metric", "value"], rows)
    bars = [r for r in rows if r[0] in ("cnn", "lr")]
    svgplot.bar_chart([f"{m} {k}" for m, k, _ in bars], [float(v) for _, _, v in bars],
                      rep / "metrics.svg", title="Test metrics: CNN vs presence+KPCA LR")
    copies = ["cnn/grid.csv", "cnn/test_metrics.csv", "roar/roar.csv", "roar/roar.svg",
              "lr/importance.csv", "lr/importance.svg", "lr/spearman.csv", "lr/spearman.svg",
              "lr/lrt.csv", "lr/coefficients.csv", "lr/cv.csv", "kshape/objective.csv",
              "inversion/scores.csv", "sensitivity/sensitivity.csv"]
    for rel in copies:
        src = out / rel
        if src.exists():
            dst = rep / rel.replace("/", "_")
            shutil.copyfile(src, dst)
    shutil.copytree(out / "kshape/centroids", rep / "centroids")
    prov = {"config": cfg, "config_hash": config_hash(cfg), "seeds": cfg["seeds"]}
    _write_json(rep / "provenance.json", prov)
    return {"report_dir": str(rep), "config_hash": prov["config_hash"]}


RUNNERS = {
    "synth": stage_synth,
    "preprocess": stage_preprocess,
    "split": stage_split,
    "grid-search": stage_grid_search,
    "train-cnn": stage_train_cnn,
    "invert": stage_invert,
    "saliency": stage_saliency,
    "roar": stage_roar,
    "kshape": stage_kshape,
    "extract": stage_extract,
    "fit-lr": stage_fit_lr,
    "importance": stage_importance,
    "lrt": stage_lrt,
    "report": stage_report,
    "sensitivity": stage_sensitivity,
}


def run_stage(stage: str, cfg: dict, out, **options) -> dict:
    if stage not in RUNNERS:
        raise ValueError(f"unknown stage {stage!r}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return RUNNERS[stage](cfg, out, **options)


def run_all(cfg: dict, out, skip_grid: bool | None = None) -> dict:
    """Run every stage in order; the grid search is skipped for a single-cell grid."""
    if skip_grid is None:
        skip_grid = all(len(v) == 1 for v in _grid(cfg).values())
    results = {}
    for stage in STAGES:
        if stage == "grid-search" and skip_grid:
            continue
        logger.info("stage %s", stage)
        results[stage] = run_stage(stage, cfg, out)
    return results
