"""Config-driven workflow: simulate, estimate, reconstruct, bin and experiments.

Each ``cmd_*`` function reads its inputs from and writes its outputs to the
run directory ``cfg.paths.out``; the in-memory helpers underneath are what
the tests and scripts call directly. Every command writes a manifest with
the config echo, the package version and SHA-256 hashes of its outputs.
"""

import csv
import hashlib
import logging
import os
import warnings

import numpy as np

from . import __version__
from .acquisition import (
    Acquisition, AcquisitionSpec, add_noise, extract_navigators, noise_std_for_snr,
)
from .arrays import read_array, write_array
from .embed import (
    assign_bins, best_agreement, cardiac_bin_spreads, embed, gated_export,
    match_axes, write_bins_csv, write_pgm,
)
from .errors import ConfigError, StageDependencyError
from .laplacian import (
    GraphLaplacian, IrlsParams, auto_sigma, exp_weights, irls_estimate,
    pairwise_sq_distances,
)
from .phantom import PhantomSpec, high_motion_frames, make_phantom
from .recon import eigen_truncate, nrmse, solve_full, solve_truncated

log = logging.getLogger(__name__)

EXPERIMENTS = ("navcount", "duration", "methods", "lambda")
LAMBDA_GRID = (1e3, 3e3, 1e4, 3e4, 1e5)


# ---------------------------------------------------------------- specs

def phantom_spec(cfg):
    p = cfg.phantom
    return PhantomSpec(
        n=p.n, frames=p.frames, cardiac_rate=p.cardiac_rate, resp_rate=p.resp_rate,
        resp_amplitude=p.resp_amplitude, rate_jitter=p.rate_jitter,
        episodes=p.episode_list(), seed=cfg.run.seed,
    )


def acquisition_spec(cfg, frames=None):
    a = cfg.acquisition
    return AcquisitionSpec(
        n=cfg.phantom.n, frames=cfg.phantom.frames if frames is None else frames,
        lines_per_frame=a.lines_per_frame, nav_count=a.nav_count,
        samples_per_spoke=a.samples_per_spoke or None, coils=a.coils,
        sampling_mode=a.sampling_mode,
    )


def irls_params(cfg):
    s = cfg.irls
    return IrlsParams(
        sigma=s.sigma if s.sigma == "median-auto" else float(s.sigma), mu=s.mu,
        gamma0=s.gamma0 or None, eta=s.eta, iterations=s.iterations,
        mu_relative=s.mu_relative, clip_negative=s.clip_negative,
    )


# ---------------------------------------------------------------- in-memory stages

def simulate_data(cfg, X=None):
    """Phantom, noisy measurements and navigators as a dict.

    ``X`` replaces the phantom series (the phases are still reported).
    Noise uses seed ``run.seed + 1`` so it is independent of the phantom.
    """
    pspec = phantom_spec(cfg)
    truth, theta_c, theta_r = make_phantom(pspec)
    if X is not None:
        truth = X
    aspec = acquisition_spec(cfg)
    op = Acquisition(aspec)
    clean = op.forward(truth)
    a = cfg.acquisition
    std = a.noise_std if a.noise_std >= 0 else noise_std_for_snr(clean, a.snr_db)
    B = add_noise(clean, std, cfg.run.seed + 1)
    return {
        "truth": truth, "theta_c": theta_c, "theta_r": theta_r, "meas": B,
        "clean": clean, "noise_std": std, "op": op, "pspec": pspec,
        "navigators": extract_navigators(B, aspec),
    }


def estimate_laplacian(Z, cfg, method="irls"):
    """Laplacian from navigators by ``irls``, ``exp-knn`` or ``exp-threshold``.

    Returns (laplacian, denoised navigators or None, IRLS trace or []).
    Exponential baselines use the median distance as kernel width and,
    for thresholding, the ``baseline.threshold_quantile`` distance quantile.
    """
    if method == "irls":
        res = irls_estimate(Z, irls_params(cfg))
        return res.laplacian, res.R, res.trace
    sigma = auto_sigma(Z)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if method == "exp-knn":
            lap = exp_weights(Z, sigma, knn=cfg.baseline.knn)
        elif method == "exp-threshold":
            d2 = pairwise_sq_distances(Z)
            d = np.sqrt(d2[np.triu_indices(d2.shape[0], 1)])
            t = float(np.quantile(d, cfg.baseline.threshold_quantile))
            lap = exp_weights(Z, sigma, threshold=t)
        else:
            raise ConfigError(f"unknown Laplacian method {method!r}")
    return lap, None, []


def reconstruct_series(B, op, lap, cfg, rank=None, rhs_full=None):
    """Truncated (or full, with ``solver.method = full``) manifold recon.

    lambda is taken relative to the largest Laplacian eigenvalue so the
    setting does not depend on the weight scale. Returns (X, log, extra).
    """
    s = cfg.solver
    vals = lap.eigen().values
    top = float(vals[-1]) if vals[-1] > 0 else 1.0
    lam = s.lam / top
    if s.method == "full":
        X, history = solve_full(B, op, lap, lam, tol=s.tol, maxiter=s.maxiter)
        return X, history, {}
    r = min(rank or s.rank, op.frames)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        basis = eigen_truncate(lap, r)
    U, X, history = solve_truncated(
        B, op, basis, lam, tol=s.tol, maxiter=s.maxiter, rhs_full=rhs_full,
        precondition=s.precondition,
    )
    return X, history, {"U": U, "V": basis.vectors, "flags": basis.flags}


def fit_scale(X, truth):
    """Least-squares complex scalar a minimizing ||a X - truth||."""
    den = np.vdot(X, X)
    return X if den == 0 else X * (np.vdot(X, truth) / den)


def baseline_series(B, op, truth=None):
    """Density-compensated gridding recon, scalar-fitted to truth when given."""
    X = op.gridding_recon(B)
    return X if truth is None else fit_scale(X, truth)


def frame_nrmse(X, truth, frames):
    sel = np.asarray(frames)
    return nrmse(X[:, sel], truth[:, sel])


def agreements(lap, theta_r, theta_c, dims=4):
    """Best phase agreement over the first ``dims`` embedding coordinates."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        coords = embed(lap, min(dims, lap.frames - 1))
    ar, jr = best_agreement(coords, theta_r)
    ac, jc = best_agreement(coords, theta_c)
    return {"resp": ar, "card": ac, "resp_col": jr, "card_col": jc}


def inject_outlier(X, n, frame, shift):
    """Copy of X with one frame rolled diagonally by ``shift`` pixels."""
    out = X.copy()
    img = out[:, frame].reshape(n, n)
    out[:, frame] = np.roll(img, (shift, shift), axis=(0, 1)).ravel()
    return out


def bin_series(lap, cfg, theta_r=None, theta_c=None):
    """Embedding and bin assignment; axes are auto-matched when phases are known."""
    b = cfg.binning
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        coords = embed(lap, min(b.embed_dims, lap.frames - 1))
    if theta_r is not None and theta_c is not None and coords.shape[1] >= 2:
        rc, cc, swapped = match_axes(coords, theta_r, theta_c)
    else:
        rc, cc, swapped = 0, 1, False
    bins = assign_bins(coords, b.n_resp, b.n_card, resp_col=rc, card_col=cc)
    return coords, bins, {"resp_col": rc, "card_col": cc, "swapped": swapped}


# ---------------------------------------------------------------- file helpers

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _out_dir(cfg):
    out = cfg.paths.out
    if os.path.exists(out) and not os.path.isdir(out):
        raise ConfigError(f"paths.out: {out} exists and is not a directory")
    os.makedirs(out, exist_ok=True)
    return out


def _need(out, *names):
    paths = []
    for name in names:
        p = os.path.join(out, name)
        if not os.path.isfile(p):
            raise StageDependencyError(f"missing upstream file {p}; run the earlier stage first")
        paths.append(p)
    return paths


def write_manifest(cfg, stage, files):
    """Manifest text: version, stage, config echo and output hashes (sorted)."""
    out = cfg.paths.out
    lines = [f"tool manifoldmri {__version__}", f"stage {stage}", "", "[config]", cfg.to_ini(), "[outputs]"]
    for name in sorted(set(files)):
        lines.append(f"{_sha256(os.path.join(out, name))}  {name}")
    path = os.path.join(out, f"manifest_{stage}.txt")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])


def _error_images(out, prefix, named_series, truth, frame, n):
    """|X - truth| for one frame of each series, on one shared window."""
    errs = {name: np.abs(X[:, frame] - truth[:, frame]).reshape(n, n) for name, X in named_series.items()}
    hi = max(float(e.max()) for e in errs.values()) or 1.0
    written = []
    for name, e in errs.items():
        fname = f"{prefix}_{name}.pgm"
        write_pgm(os.path.join(out, fname), e, window=(0.0, hi))
        written += [fname, fname + ".window.txt"]
    return written


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg):
    out = _out_dir(cfg)
    d = simulate_data(cfg)
    arrays = {
        "truth.bstm": d["truth"], "meas.bstm": d["meas"], "navigators.bstm": d["navigators"],
        "theta_c.bstm": d["theta_c"], "theta_r.bstm": d["theta_r"],
        "coil_maps.bstm": d["op"].maps,
    }
    for name, a in arrays.items():
        write_array(os.path.join(out, name), a)
    write_table(os.path.join(out, "metrics_simulate.csv"), ["metric", "value"],
                [["noise_std", d["noise_std"]], ["frames", cfg.phantom.frames]])
    files = list(arrays) + ["metrics_simulate.csv"]
    write_manifest(cfg, "simulate", files)
    return files


def _load_phases(out):
    tc, tr = (os.path.join(out, f) for f in ("theta_c.bstm", "theta_r.bstm"))
    if os.path.isfile(tc) and os.path.isfile(tr):
        return read_array(tr), read_array(tc)
    return None, None


def cmd_estimate(cfg, method="irls"):
    out = _out_dir(cfg)
    angles = cfg.irls.angle_list()
    if angles is None:
        (zp,) = _need(out, "navigators.bstm")
        Z = read_array(zp)
    else:
        # navigator subset, re-extracted from the measurements
        (mp,) = _need(out, "meas.bstm")
        try:
            Z = extract_navigators(read_array(mp), acquisition_spec(cfg), angles)
        except ValueError as exc:
            raise ConfigError(f"irls.nav_angles: {exc}") from None
    lap, R, trace = estimate_laplacian(Z, cfg, method)
    eig = lap.eigen()
    arrays = {"laplacian_W.bstm": lap.W, "laplacian_L.bstm": lap.L,
              "eigenvalues.bstm": eig.values, "eigenvectors.bstm": eig.vectors}
    for name, a in arrays.items():
        write_array(os.path.join(out, name), a)
    files = list(arrays)
    if R is not None:
        write_array(os.path.join(out, "navigators_denoised.bstm"), R)
        files.append("navigators_denoised.bstm")
    write_table(os.path.join(out, "irls_log.csv"), ["iteration", "gamma", "cost", "stationarity"],
                [[t.n, t.gamma, t.cost, t.stationarity] for t in trace])
    files.append("irls_log.csv")
    rows = [["method", method]]
    theta_r, theta_c = _load_phases(out)
    if theta_r is not None:
        ag = agreements(lap, theta_r, theta_c, cfg.binning.embed_dims)
        rows += [["agreement_resp", ag["resp"]], ["agreement_card", ag["card"]]]
    write_table(os.path.join(out, "metrics_estimate.csv"), ["metric", "value"], rows)
    files.append("metrics_estimate.csv")
    write_manifest(cfg, "estimate", files)
    return files


def _load_laplacian(out):
    (wp,) = _need(out, "laplacian_W.bstm")
    return GraphLaplacian(read_array(wp))


def cmd_reconstruct(cfg):
    out = _out_dir(cfg)
    (mp,) = _need(out, "meas.bstm")
    B = read_array(mp)
    lap = _load_laplacian(out)
    op = Acquisition(acquisition_spec(cfg))
    X, history, extra = reconstruct_series(B, op, lap, cfg)
    write_array(os.path.join(out, "recon.bstm"), X)
    files = ["recon.bstm"]
    if "U" in extra:
        write_array(os.path.join(out, "coeffs.bstm"), extra["U"])
        write_array(os.path.join(out, "basis.bstm"), extra["V"])
        files += ["coeffs.bstm", "basis.bstm"]
    with open(os.path.join(out, "cg_log.txt"), "w") as fh:
        fh.write("iteration relative_residual energy\n")
        fh.write("\n".join(history.lines()) + "\n")
    files.append("cg_log.txt")
    rows = [["cg_iterations", history.iterations], ["cg_converged", int(history.converged)]]
    truth_path = os.path.join(out, "truth.bstm")
    if os.path.isfile(truth_path):
        truth = read_array(truth_path)
        base = baseline_series(B, op, truth)
        rows += [["nrmse_proposed", nrmse(X, truth)], ["nrmse_baseline", nrmse(base, truth)]]
        files += _error_images(out, "error", {"proposed": X, "baseline": base}, truth,
                               op.frames // 2, op.n)
    write_table(os.path.join(out, "metrics_reconstruct.csv"), ["metric", "value"], rows)
    files.append("metrics_reconstruct.csv")
    write_manifest(cfg, "reconstruct", files)
    return files


def cmd_bin(cfg):
    out = _out_dir(cfg)
    lap = _load_laplacian(out)
    (rp,) = _need(out, "recon.bstm")
    X = read_array(rp)
    theta_r, theta_c = _load_phases(out)
    coords, bins, info = bin_series(lap, cfg, theta_r, theta_c)
    n = cfg.phantom.n
    write_array(os.path.join(out, "embedding.bstm"), coords)
    write_bins_csv(os.path.join(out, "bins.csv"), bins)
    images, empty = gated_export(X, bins)
    write_array(os.path.join(out, "bin_images.bstm"),
                images.reshape(bins.n_resp, bins.n_card, n, n))
    files = ["embedding.bstm", "bins.csv", "bin_images.bstm"]
    for r in range(bins.n_resp):
        for c in range(bins.n_card):
            if empty[r, c]:
                continue
            fname = f"bin_r{r}_c{c}.pgm"
            write_pgm(os.path.join(out, fname), images[r, c].reshape(n, n))
            files += [fname, fname + ".window.txt"]
    rows = [["resp_col", info["resp_col"]], ["card_col", info["card_col"]],
            ["axes_swapped", int(info["swapped"])], ["empty_bins", int(empty.sum())]]
    if theta_c is not None:
        spreads = cardiac_bin_spreads(bins, theta_c)
        rows += [["card_spread_max", float(np.nanmax(spreads))],
                 ["card_bins_below_quarter_pi", float(np.mean(spreads < np.pi / 4))]]
    write_table(os.path.join(out, "metrics_bin.csv"), ["metric", "value"], rows)
    files.append("metrics_bin.csv")
    write_manifest(cfg, "bin", files)
    return files


def cmd_all(cfg):
    files = []
    for stage in (cmd_simulate, cmd_estimate, cmd_reconstruct, cmd_bin):
        files += stage(cfg)
    return files


# ---------------------------------------------------------------- experiments

def _load_sim(cfg):
    out = _out_dir(cfg)
    paths = _need(out, "truth.bstm", "meas.bstm", "theta_c.bstm", "theta_r.bstm")
    truth, B, theta_c, theta_r = (read_array(p) for p in paths)
    if truth.shape[1] != cfg.phantom.frames:
        raise ConfigError("phantom.frames does not match the simulated data in paths.out")
    return out, truth, B, theta_c, theta_r


def run_navcount(cfg, truth, B, high):
    """NRMSE per navigator subset: all frames, high-motion and low-motion frames."""
    aspec = acquisition_spec(cfg)
    op = Acquisition(aspec)
    rhs = op.adjoint(B)
    subsets = [s for s in ((0.0, 45.0, 90.0, 135.0), (0.0, 90.0), (0.0,))
               if set(s) <= set(aspec.nav_angles)]
    rows, series = [], {}
    for angles in subsets:
        Z = extract_navigators(B, aspec, angles)
        lap, _, _ = estimate_laplacian(Z, cfg)
        X, _, _ = reconstruct_series(B, op, lap, cfg, rhs_full=rhs)
        name = f"{len(angles)}nav"
        series[name] = X
        rows.append([name, nrmse(X, truth), frame_nrmse(X, truth, high), frame_nrmse(X, truth, ~high)])
    return rows, series


def run_duration(cfg, truth, B, high):
    """Evaluation-window NRMSE when only the first budget fraction of frames is used."""
    k = cfg.phantom.frames
    ev = max(1, int(round(cfg.experiment.eval_fraction * k)))
    rows, series = [], {}
    for frac in cfg.experiment.budget_list():
        kb = max(ev, int(round(frac * k)))
        # same golden-angle sequence, cut after kb frames
        aspec = acquisition_spec(cfg, frames=kb)
        op = Acquisition(aspec)
        Bb = B[:kb]
        lap, _, _ = estimate_laplacian(extract_navigators(Bb, aspec), cfg)
        X, _, _ = reconstruct_series(Bb, op, lap, cfg)
        Xe, Te, he = X[:, :ev], truth[:, :ev], high[:ev]
        name = f"budget{frac:g}"
        series[name] = np.concatenate([Xe, truth[:, ev:]], axis=1)
        rows.append([name, kb, nrmse(Xe, Te),
                     frame_nrmse(Xe, Te, he) if he.any() else float("nan"),
                     frame_nrmse(Xe, Te, ~he) if (~he).any() else float("nan")])
    return rows, series


def run_methods(cfg, truth, B, theta_c, theta_r, reconstruct=True):
    """Phase agreement (clean and with a one-frame outlier) and NRMSE per method."""
    aspec = acquisition_spec(cfg)
    op = Acquisition(aspec)
    n, k = cfg.phantom.n, cfg.phantom.frames
    dims = cfg.binning.embed_dims
    frame = cfg.experiment.outlier_frame if cfg.experiment.outlier_frame >= 0 else k // 2
    if frame >= k:
        raise ConfigError("experiment.outlier_frame exceeds the frame count")
    X_out = inject_outlier(truth, n, frame, cfg.experiment.outlier_shift)
    B_out = B + op.forward(X_out - truth)
    Z, Z_out = extract_navigators(B, aspec), extract_navigators(B_out, aspec)
    rhs = op.adjoint(B) if reconstruct else None
    rows, series = [], {}
    for method in ("irls", "exp-threshold", "exp-knn"):
        lap, _, _ = estimate_laplacian(Z, cfg, method)
        ag = agreements(lap, theta_r, theta_c, dims)
        lap_o, _, _ = estimate_laplacian(Z_out, cfg, method)
        ag_o = agreements(lap_o, theta_r, theta_c, dims)
        err = float("nan")
        if reconstruct:
            X, _, _ = reconstruct_series(B, op, lap, cfg, rhs_full=rhs)
            series[method] = X
            err = nrmse(X, truth)
        rows.append([method, ag["resp"], ag["card"], ag_o["resp"], ag_o["card"], err])
    return rows, series


def run_lambda_sweep(cfg, truth, B, grid=LAMBDA_GRID):
    """NRMSE of the truncated recon over a logarithmic grid of relative lambda."""
    op = Acquisition(acquisition_spec(cfg))
    lap, _, _ = estimate_laplacian(extract_navigators(B, op.spec), cfg)
    rhs = op.adjoint(B)
    saved = cfg.solver.lam
    rows, series = [], {}
    try:
        for lam in grid:
            cfg.solver.lam = lam
            X, _, _ = reconstruct_series(B, op, lap, cfg, rhs_full=rhs)
            series[f"lambda{lam:g}"] = X
            rows.append([lam, nrmse(X, truth)])
    finally:
        cfg.solver.lam = saved
    return rows, series


def cmd_experiment(cfg, which):
    if which not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {which!r}; choose from {', '.join(EXPERIMENTS)}")
    out, truth, B, theta_c, theta_r = _load_sim(cfg)
    pspec = phantom_spec(cfg)
    high = high_motion_frames(pspec)
    n, k = cfg.phantom.n, cfg.phantom.frames
    if which == "navcount":
        rows, series = run_navcount(cfg, truth, B, high)
        header = ["laplacian", "nrmse", "nrmse_high_motion", "nrmse_low_motion"]
        frame = int(np.argmax(np.abs(pspec.displacement())))
    elif which == "duration":
        rows, series = run_duration(cfg, truth, B, high)
        header = ["budget", "frames_used", "nrmse_eval", "nrmse_eval_high_motion", "nrmse_eval_low_motion"]
        ev = max(1, int(round(cfg.experiment.eval_fraction * k)))
        frame = int(np.argmax(np.abs(pspec.displacement()[:ev])))
    elif which == "lambda":
        rows, series = run_lambda_sweep(cfg, truth, B)
        header = ["lambda_relative", "nrmse"]
        frame = k // 2
    else:
        rows, series = run_methods(cfg, truth, B, theta_c, theta_r)
        header = ["laplacian", "agreement_resp", "agreement_card", "agreement_resp_outlier",
                  "agreement_card_outlier", "nrmse"]
        frame = k // 4
    table = f"experiment_{which}.csv"
    write_table(os.path.join(out, table), header, rows)
    files = [table] + _error_images(out, f"experiment_{which}_error", series, truth, frame, n)
    write_manifest(cfg, f"experiment_{which}", files)
    return files
