"""Experiment runner: builds inputs per experiment kind, trains, and writes
a self-describing artifact directory.

Every run directory contains ``manifest.json`` (schema ``otbary-run-v1``)
with the fully resolved configuration, seed, library versions, and a
summary block; a run is reproducible from its manifest alone.  CSV files
carry a ``# schema:`` comment line so downstream tooling can detect drift.
"""

import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .barycenter import constant_shift_baseline, train, variational_gradient_check
from .config import build_config, config_to_dict
from .congruent import (ConvexQuadratic, LogSumExpPotential, chain_system,
                        grad_left, make_known_barycenter_dataset, system_from_json,
                        system_to_json, verify_congruence)
from .errors import ConfigError, NumericalError, ValidationError
from .gaussian import (GaussianMeasure, bw2_uvp, gaussian_ot_map,
                       location_scatter_truth)
from .linalg import random_rotation
from .measures import (base_sampler, make_scatter_population, member_samplers,
                       pushforward, toy2d_sampler, write_samples_csv)
from .nn import he_init, load_mlp, save_mlp
from .rng import stream
from .svg import ScatterPanel, render_scatter_svg

__all__ = [
    "RUN_SCHEMA",
    "METRICS_SCHEMA",
    "TRACE_SCHEMA",
    "build_system",
    "build_inputs",
    "run_experiment",
    "report",
    "verify",
]

RUN_SCHEMA = "otbary-run-v1"
METRICS_SCHEMA = "otbary-metrics-v1"
TRACE_SCHEMA = "otbary-trace-v1"

_METRICS_COLUMNS = ("outer_iter", "proxy_objective", "uvp_vs_truth", "loss_G_mean")
_TRACE_COLUMNS = ("step", "loss_v", "loss_T", "lr_v", "lr_T")


def _versions():
    return {
        "artifact": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
    }


def build_system(cfg):
    """Congruent system described by the [congruent] section."""
    settings = cfg.congruent
    dim = cfg.dimension
    functions = []
    for m in range(settings.n_functions):
        rng = stream(cfg.seed, "system", m)
        if settings.family == "quadratic":
            rot = random_rotation(dim, rng)
            eigs = rng.uniform(0.5, 2.0, dim) * settings.mix_scale
            functions.append(ConvexQuadratic(rot.T @ np.diag(eigs) @ rot))
        else:
            functions.append(LogSumExpPotential.random(
                dim, rng, n_planes=settings.n_planes,
                lam=settings.strong_convexity, eps=settings.mix_scale))
    betas = np.asarray(settings.betas) if settings.betas else None
    base_weights = np.asarray(settings.base_weights) if settings.base_weights else None
    return chain_system(functions, betas=betas, base_weights=base_weights,
                        solve=settings.solve_config())


def build_inputs(cfg):
    """Input samplers, weights, and (when known) true barycenter moments.

    Returns
    -------
    (inputs, weights, truth, system) : with ``truth`` a GaussianMeasure or
        None, ``system`` a CongruentSystem or None.
    """
    kind = cfg.kind
    if kind in ("gaussian-bench", "uniform-bench"):
        base_kind = "gaussian" if kind == "gaussian-bench" else "uniform"
        spec = make_scatter_population(
            cfg.dimension, cfg.n_inputs, seed=cfg.seed,
            weights=cfg.resolved_weights(), base_kind=base_kind,
            shift_scale=cfg.shift_scale)
        return member_samplers(spec), spec.weights, location_scatter_truth(spec), None
    if kind == "toy2d":
        inputs = [toy2d_sampler(shape, seed=cfg.seed + n)
                  for n, shape in enumerate(cfg.toy_shapes)]
        return inputs, cfg.resolved_weights(len(inputs)), None, None
    if kind in ("congruent-dataset", "win-train"):
        system = build_system(cfg)
        base = base_sampler("gaussian", cfg.dimension, seed=cfg.seed)
        members, weights = make_known_barycenter_dataset(base, system)
        truth = GaussianMeasure(np.zeros(cfg.dimension), np.eye(cfg.dimension))
        return members, weights, truth, system
    raise ConfigError(f"experiment kind {kind!r} does not define input measures")


def _write_csv(path, schema, columns, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# schema: {schema}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def read_csv(path):
    """Read a schema-tagged CSV back as (schema, columns, float rows)."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("# schema: "):
            raise ValidationError(f"{path}: missing schema comment line")
        schema = first[len("# schema: "):]
        columns = fh.readline().strip().split(",")
        rows = [[float(v) for v in line.strip().split(",")]
                for line in fh if line.strip()]
    return schema, columns, rows


def _write_manifest(out, cfg, summary, wall_time):
    manifest = {
        "schema": RUN_SCHEMA,
        "kind": cfg.kind,
        "seed": cfg.seed,
        "config": config_to_dict(cfg),
        "versions": _versions(),
        "wall_time_s": wall_time,
        "summary": summary,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return manifest


def _export_samples(out, cfg, inputs, state=None):
    n = cfg.export_samples
    if n == 0:
        return
    samples_dir = out / "samples"
    samples_dir.mkdir(exist_ok=True)
    for i, sampler in enumerate(inputs):
        write_samples_csv(sampler, n, stream(cfg.seed, "export", "input", i),
                          samples_dir / f"input_{i}.csv")
    if state is not None:
        gen_sampler = pushforward(state.latent, state.generator.forward,
                                  dim_out=state.dim, tag="generator")
        write_samples_csv(gen_sampler, n, stream(cfg.seed, "export", "latent"),
                          samples_dir / "generated.csv")
        for i, pair in enumerate(state.pairs):
            mapped = pushforward(gen_sampler, pair.map_net.forward, tag=f"mapped_{i}")
            write_samples_csv(mapped, n, stream(cfg.seed, "export", "latent"),
                              samples_dir / f"mapped_{i}.csv")


def _scatter_panels(cfg, inputs, state):
    n = min(cfg.export_samples or 2048, 2048)
    latent = state.latent.sample(stream(cfg.seed, "plot", "latent"), n)
    generated = state.generator.forward(latent)
    panels = [ScatterPanel(title="generated barycenter",
                           groups=[("generated", generated)])]
    for i, (sampler, pair) in enumerate(zip(inputs, state.pairs)):
        pts = sampler.sample(stream(cfg.seed, "plot", "input", i), n)
        mapped = pair.map_net.forward(generated)
        panels.append(ScatterPanel(
            title=f"input {i} vs mapped",
            groups=[(f"input {i}", pts), ("mapped", mapped)]))
    return panels


def _run_training_kind(cfg, out):
    inputs, weights, truth, system = build_inputs(cfg)
    traces_dir = out / "traces"
    traces_dir.mkdir(exist_ok=True)
    trace_rows = [[] for _ in inputs]

    def sink(outer_iter, solver_traces):
        for i, rows in enumerate(solver_traces):
            trace_rows[i].extend(
                (row.step, row.loss_v, row.loss_t, row.lr_v, row.lr_t) for row in rows)

    state, metrics = train(inputs, weights, cfg.train, cfg.seed, truth=truth,
                           trace_sink=sink)
    _write_csv(out / "metrics.csv", METRICS_SCHEMA, _METRICS_COLUMNS,
               [(m.outer_iter, m.proxy_objective, m.uvp_vs_truth, m.loss_g_mean)
                for m in metrics])
    for i, rows in enumerate(trace_rows):
        _write_csv(traces_dir / f"pair_{i}.csv", TRACE_SCHEMA, _TRACE_COLUMNS, rows)

    ckpt = out / "checkpoints"
    ckpt.mkdir(exist_ok=True)
    save_mlp(state.generator, ckpt / "generator.mlp")
    for i, pair in enumerate(state.pairs):
        save_mlp(pair.map_net, ckpt / f"map_{i}.mlp")
        save_mlp(pair.potential_net, ckpt / f"potential_{i}.mlp")

    baseline = constant_shift_baseline(inputs, weights, cfg.train.eval_samples,
                                       stream(cfg.seed, "baseline"), truth=truth)
    _export_samples(out, cfg, inputs, state)
    if cfg.dimension == 2:
        render_scatter_svg(_scatter_panels(cfg, inputs, state), out / "scatter.svg")
    if system is not None:
        (out / "system.json").write_text(system_to_json(system), encoding="utf-8")

    final = metrics[-1]
    summary = {
        "dimension": cfg.dimension,
        "method": cfg.kind,
        "n_inputs": len(inputs),
        "weights": [float(w) for w in weights],
        "iterations": cfg.train.outer_iterations,
        "final_proxy_objective": final.proxy_objective,
        "final_uvp": final.uvp_vs_truth,
        "final_loss_G": final.loss_g_mean,
        "baseline_uvp": baseline.uvp,
    }
    return summary


def _run_congruent_dataset(cfg, out):
    inputs, weights, truth, system = build_inputs(cfg)
    (out / "system.json").write_text(system_to_json(system), encoding="utf-8")
    probe = base_sampler("gaussian", cfg.dimension, seed=cfg.seed).sample(
        stream(cfg.seed, "congruence-probe"), 1024)
    residual = verify_congruence(system, probe)
    _export_samples(out, cfg, inputs)
    return {
        "dimension": cfg.dimension,
        "method": cfg.kind,
        "n_inputs": len(inputs),
        "weights": [float(w) for w in weights],
        "iterations": 0,
        "final_uvp": float("nan"),
        "congruence_residual": residual,
    }


def _run_lemma_checks(cfg, out):
    dim = cfg.dimension
    checks = {}

    system = build_system(cfg)
    probe = base_sampler("gaussian", dim, seed=cfg.seed).sample(
        stream(cfg.seed, "lemma-probe"), 1024)
    tol = 1e-12 if cfg.congruent.family == "quadratic" else 1e-6
    residual = verify_congruence(system, probe)
    checks["congruence_residual"] = {"value": residual, "bound": tol,
                                     "passed": bool(residual < tol)}

    alpha_err = float(abs(system.weights.sum() - 1.0))
    checks["weight_identity"] = {"value": alpha_err, "bound": 1e-12,
                                 "passed": bool(alpha_err < 1e-12)}

    rng = stream(cfg.seed, "lemma-maps")
    generator = he_init([dim, 64, 64, dim], stream(cfg.seed, "lemma-gen"))
    base = GaussianMeasure(np.zeros(dim), np.eye(dim))
    maps = []
    for _ in range(2):
        chol = rng.standard_normal((dim, dim)) * 0.3 + np.eye(dim)
        target = GaussianMeasure(rng.standard_normal(dim), chol @ chol.T)
        a_map, b_map = gaussian_ot_map(base, target)
        maps.append(lambda x, a=a_map, b=b_map: x @ a.T + b)
    z = stream(cfg.seed, "lemma-z").standard_normal((256, dim))
    _, _, rel = variational_gradient_check(generator, maps, [0.4, 0.6], z)
    checks["gradient_equivalence_rel"] = {"value": rel, "bound": 1e-6,
                                          "passed": bool(rel < 1e-6)}

    beta = 0.35
    psi = system.functions[0]
    y = stream(cfg.seed, "lemma-inv").standard_normal((128, dim))
    x = beta * y + (1.0 - beta) * psi.grad(y)
    inv_err = float(np.max(np.abs(grad_left(psi, beta, x,
                                            solve=cfg.congruent.solve_config()) - y)))
    inv_bound = 1e-10 if cfg.congruent.family == "quadratic" else 1e-6
    checks["mutual_inverse_err"] = {"value": inv_err, "bound": inv_bound,
                                    "passed": bool(inv_err < inv_bound)}

    (out / "checks.json").write_text(json.dumps(checks, indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    if not all(c["passed"] for c in checks.values()):
        failed = [name for name, c in checks.items() if not c["passed"]]
        raise NumericalError(f"lemma checks failed: {', '.join(failed)}")
    return {
        "dimension": dim,
        "method": cfg.kind,
        "iterations": 0,
        "final_uvp": float("nan"),
        "checks": checks,
    }


def load_manifest(run_dir):
    """Parsed and schema-checked ``manifest.json`` of a run directory."""
    path = Path(run_dir) / "manifest.json"
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed manifest: {exc}") from exc
    if manifest.get("schema") != RUN_SCHEMA:
        raise ValidationError(f"{path}: unknown manifest schema {manifest.get('schema')!r}")
    return manifest


def config_from_manifest(manifest):
    """Rebuild the experiment configuration stored in a run manifest."""
    payload = dict(manifest["config"])
    exp = {k: payload[k] for k in ("kind", "dimension", "n_inputs", "weights", "seed",
                                   "output_dir", "shift_scale", "toy_shapes",
                                   "export_samples")}
    if exp["kind"] in ("win-train", "congruent-dataset", "lemma-checks"):
        exp.pop("weights", None)  # derived from the system, not a free key
    return build_config(exp, payload["train"], payload["congruent"], payload["inverse"])


def _run_inverse_maps(cfg, out):
    from .solver import fit_inverse_maps

    parent = load_manifest(cfg.inverse.run_dir)
    parent_cfg = config_from_manifest(parent)
    if parent_cfg.kind not in ("gaussian-bench", "uniform-bench", "toy2d", "win-train"):
        raise ConfigError(f"inverse-maps needs a training run, got {parent_cfg.kind!r}")
    inputs, weights, _, _ = build_inputs(parent_cfg)
    ckpt_dir = Path(cfg.inverse.run_dir) / "checkpoints"
    generator = load_mlp(ckpt_dir / "generator.mlp")
    latent_dim = generator.layer_sizes[0]
    latent = base_sampler("gaussian", latent_dim, seed=parent_cfg.seed)
    barycenter = pushforward(latent, generator.forward,
                             dim_out=generator.layer_sizes[-1], tag="generator")

    mmr_cfg = cfg.train.mmr_config(parent_cfg.dimension)
    pairs, traces = fit_inverse_maps(barycenter, inputs, mmr_cfg,
                                     rounds=cfg.inverse.rounds, seed=cfg.seed)
    traces_dir = out / "traces"
    traces_dir.mkdir(exist_ok=True)
    for i, rows in enumerate(traces):
        _write_csv(traces_dir / f"inverse_{i}.csv", TRACE_SCHEMA, _TRACE_COLUMNS,
                   [(r.step, r.loss_v, r.loss_t, r.lr_v, r.lr_t) for r in rows])
    ckpt = out / "checkpoints"
    ckpt.mkdir(exist_ok=True)
    for i, pair in enumerate(pairs):
        save_mlp(pair.map_net, ckpt / f"inverse_map_{i}.mlp")
        save_mlp(pair.potential_net, ckpt / f"inverse_potential_{i}.mlp")

    n_plot = min(cfg.export_samples or 2048, 2048)
    if parent_cfg.dimension == 2:
        panels = [ScatterPanel(title="barycenter",
                               groups=[("generated", barycenter.sample(
                                   stream(cfg.seed, "plot", "bary"), n_plot))])]
        for i, (sampler, pair) in enumerate(zip(inputs, pairs)):
            pts = sampler.sample(stream(cfg.seed, "plot", "input", i), n_plot)
            panels.append(ScatterPanel(
                title=f"input {i} onto barycenter",
                groups=[(f"input {i}", pts), ("mapped", pair.map_net.forward(pts))]))
        render_scatter_svg(panels, out / "scatter.svg")

    return {
        "dimension": parent_cfg.dimension,
        "method": cfg.kind,
        "n_inputs": len(inputs),
        "weights": [float(w) for w in weights],
        "iterations": cfg.inverse.rounds,
        "final_uvp": float("nan"),
        "source_run": str(cfg.inverse.run_dir),
        "final_loss_T": [rows[-1].loss_t for rows in traces],
    }


def run_experiment(cfg):
    """Execute one experiment and write its artifact directory.

    Returns the manifest dict (already written to disk).
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    if cfg.kind in ("gaussian-bench", "uniform-bench", "toy2d", "win-train"):
        summary = _run_training_kind(cfg, out)
    elif cfg.kind == "congruent-dataset":
        summary = _run_congruent_dataset(cfg, out)
    elif cfg.kind == "lemma-checks":
        summary = _run_lemma_checks(cfg, out)
    elif cfg.kind == "inverse-maps":
        summary = _run_inverse_maps(cfg, out)
    else:
        raise ConfigError(f"unknown experiment kind {cfg.kind!r}")
    return _write_manifest(out, cfg, summary, wall_time=time.time() - started)


def _collect_manifests(directory):
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"no such run directory: {root}")
    if (root / "manifest.json").exists():
        return [load_manifest(root)]
    found = [load_manifest(child) for child in sorted(root.iterdir())
             if child.is_dir() and (child / "manifest.json").exists()]
    if not found:
        raise ValidationError(f"no run manifests found under {root}")
    return found


def _fmt_uvp(value):
    if value is None or (isinstance(value, float) and not np.isfinite(value)):
        return "n/a"
    return f"{value:.3f}%"


def report(directory, out=None):
    """Render the run summaries under ``directory`` as a table.

    One row per run plus one constant-shift baseline row per run that
    recorded one; rows are sorted by dimension.
    """
    out = sys.stdout if out is None else out
    manifests = _collect_manifests(directory)
    rows = []
    for manifest in manifests:
        summary = manifest["summary"]
        dim = summary.get("dimension", 0)
        rows.append((dim, summary.get("method", manifest["kind"]),
                     summary.get("final_uvp"), summary.get("iterations", 0),
                     manifest.get("wall_time_s", 0.0)))
        if summary.get("baseline_uvp") is not None:
            rows.append((dim, "constant-shift", summary["baseline_uvp"], 0,
                         0.0))
    rows.sort(key=lambda r: (r[0], r[1]))
    header = f"{'dim':>4}  {'method':<18} {'final_uvp':>10} {'iterations':>10} {'wall_s':>8}"
    print(header, file=out)
    print("-" * len(header), file=out)
    for dim, method, uvp, iters, wall in rows:
        print(f"{dim:>4}  {method:<18} {_fmt_uvp(uvp):>10} {iters:>10} {wall:>8.1f}",
              file=out)
    return rows


def verify(run_dir, out=None):
    """Re-check a stored run against its manifest.

    Reloads checkpoints, replays the documented evaluation stream, and
    confirms the recorded summary and invariants. Raises NumericalError
    on any mismatch.
    """
    from .barycenter import _moment_gaussian
    from .gaussian import bures_w2_sq
    from .measures import empirical_moments

    out = sys.stdout if out is None else out
    run_dir = Path(run_dir)
    manifest = load_manifest(run_dir)
    cfg = config_from_manifest(manifest)
    summary = manifest["summary"]
    problems = []

    if (run_dir / "system.json").exists():
        system = system_from_json((run_dir / "system.json").read_text(encoding="utf-8"))
        probe = base_sampler("gaussian", cfg.dimension, seed=cfg.seed).sample(
            stream(cfg.seed, "verify-probe"), 256)
        tol = 1e-12 if all(f.family == "quadratic" for f in system.functions) else 1e-6
        residual = verify_congruence(system, probe)
        print(f"congruence residual: {residual:.3e} (bound {tol:g})", file=out)
        if residual >= tol:
            problems.append(f"congruence residual {residual:.3e} above {tol:g}")

    gen_path = run_dir / "checkpoints" / "generator.mlp"
    if gen_path.exists():
        generator = load_mlp(gen_path)
        inputs, weights, truth, _ = build_inputs(cfg)
        latent_dim = generator.layer_sizes[0]
        z_eval = base_sampler("gaussian", latent_dim, seed=cfg.seed).sample(
            stream(cfg.seed, "eval", "latent"), cfg.train.eval_samples)
        generated = _moment_gaussian(generator.forward(z_eval))
        refs = []
        for n, s in enumerate(inputs):
            mean, cov = empirical_moments(s, cfg.train.eval_samples,
                                          stream(cfg.seed, "eval", "input", n))
            refs.append(GaussianMeasure(mean=mean, cov=cov))
        proxy = float(sum(w * bures_w2_sq(generated, ref)
                          for w, ref in zip(weights, refs)))
        print(f"replayed proxy objective: {proxy:.6f} "
              f"(stored {summary['final_proxy_objective']:.6f})", file=out)
        if abs(proxy - summary["final_proxy_objective"]) > 1e-9 * max(1.0, abs(proxy)):
            problems.append("proxy objective does not match stored summary")
        if truth is not None and np.isfinite(summary["final_uvp"]):
            uvp = bw2_uvp(generated, truth)
            print(f"replayed uvp: {uvp:.6f}% (stored {summary['final_uvp']:.6f}%)", file=out)
            if abs(uvp - summary["final_uvp"]) > 1e-9 * max(1.0, abs(uvp)):
                problems.append("uvp does not match stored summary")

    metrics_path = run_dir / "metrics.csv"
    if metrics_path.exists():
        schema, columns, rows = read_csv(metrics_path)
        if schema != METRICS_SCHEMA:
            problems.append(f"metrics schema {schema!r} != {METRICS_SCHEMA!r}")
        if tuple(columns) != _METRICS_COLUMNS:
            problems.append(f"metrics columns {columns} unexpected")
        if not rows:
            problems.append("metrics.csv has no data rows")
        else:
            stored_uvp = rows[-1][2]
            if np.isfinite(stored_uvp) != np.isfinite(summary["final_uvp"]) or (
                    np.isfinite(stored_uvp)
                    and abs(stored_uvp - summary["final_uvp"]) > 1e-9):
                problems.append("metrics.csv final uvp disagrees with manifest")

    if problems:
        raise NumericalError("verification failed: " + "; ".join(problems))
    print("verification passed", file=out)
    return manifest
