"""Command-line pipeline: gen-data, train, finetune, calibrate, interpolate, evaluate.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 missing or malformed artifact.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from collections import defaultdict
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, config as config_mod, datasets, evaluation, gan, geodesic, nnet, plotting
from .config import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISSING = 0, 2, 3, 4


class MissingArtifact(RuntimeError):
    pass


# --- helpers ----------------------------------------------------------------

def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_atomic(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _out_dir(cfg):
    out = Path(cfg["run"]["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _update_manifest(out, cfg, command, artifacts, checkpoints=()):
    """Record a finished command in ``manifest.json`` (written atomically)."""
    path = out / "manifest.json"
    manifest = json.loads(path.read_text()) if path.exists() else {}
    manifest["tool_version"] = __version__
    manifest["config"] = cfg.to_ini()
    manifest["config_hash"] = cfg.hash()
    entry = {"artifacts": sorted(_rel(out, a) for a in artifacts),
             "checkpoints": {_rel(out, c): _sha256(c) for c in checkpoints}}
    manifest.setdefault("commands", {})[command] = entry
    _write_atomic(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _rel(out, path):
    path = Path(path)
    return str(path.relative_to(out)) if path.is_relative_to(out) else str(path)


def _save_config(out, cfg):
    _write_atomic(out / "config.ini", cfg.to_ini())


def swiss_spec(cfg):
    d = cfg["dataset"]
    return datasets.SwissRollSpec(d["n_points"], (d["angle_min"], d["angle_max"]),
                                  d["radius_scale"], d["noise_std"], d["seed"])


def load_dataset(cfg):
    d = cfg["dataset"]
    if d["name"] == "swiss_roll":
        return datasets.gen_swiss_roll(swiss_spec(cfg))
    if d["name"] == "idx":
        if not d["idx_path"]:
            raise ConfigError("dataset.idx_path is required for name = idx")
        p = Path(d["idx_path"])
        if not p.exists():
            raise MissingArtifact(f"IDX file not found: {p}")
        return datasets.load_idx_images(p)
    raise ConfigError(f"unknown dataset name {d['name']!r}")


def _prior(cfg):
    g = cfg["gan"]
    try:
        return datasets.LatentPrior(g["prior"], g["prior_lo"], g["prior_hi"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _arch(cfg, sample_dim):
    g = cfg["gan"]
    return gan.GanArch(g["latent_dim"], sample_dim, g["g_hidden"], g["d_hidden"], g["slope"])


def _train_cfg(cfg):
    g = cfg["gan"]
    try:
        return gan.TrainConfig(g["batch_size"], g["steps"], g["lr_generator"], g["lr_discriminator"],
                               g["critic_iters"], g["gp_weight"], g["beta1"], g["beta2"], g["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _resolve(out, name):
    p = Path(name)
    return p if p.is_absolute() else out / p


def model_path(cfg, out):
    """Checkpoint used downstream: explicit d_checkpoint, else fine-tuned, else trained."""
    if cfg["geodesic"]["d_checkpoint"]:
        return _resolve(out, cfg["geodesic"]["d_checkpoint"])
    ft = _resolve(out, cfg["finetune"]["checkpoint"])
    if cfg["finetune"]["steps"] > 0 and ft.exists():
        return ft
    return _resolve(out, cfg["gan"]["checkpoint"])


def load_run_model(cfg, out, need_calibration=True):
    path = model_path(cfg, out)
    if not path.exists():
        raise MissingArtifact(f"checkpoint not found: {path} (run `train` first)")
    model = gan.load_model(path)
    cal = out / "calibration.json"
    if model.kind == "wasserstein" and model.calibration is None:
        if cal.exists():
            model.calibration = gan.CriticCalibration(**json.loads(cal.read_text()))
        elif need_calibration:
            raise MissingArtifact(f"{cal} not found (run `calibrate` first)")
    return model


class _CsvLog:
    def __init__(self, path):
        self.fh = open(path, "w", newline="")
        self.fh.write("step,d_loss,g_loss\r\n")

    def __call__(self, step, d_loss, g_loss):
        self.fh.write(f"{step},{d_loss!r},{g_loss!r}\r\n")

    def close(self):
        self.fh.close()


# --- commands ---------------------------------------------------------------

def cmd_gen_data(cfg):
    out = _out_dir(cfg)
    _save_config(out, cfg)
    handle = load_dataset(cfg)
    path = out / "data.csv"
    datasets.export_csv(handle, path)
    _update_manifest(out, cfg, "gen-data", [path])
    return [path]


def cmd_train(cfg):
    out = _out_dir(cfg)
    _save_config(out, cfg)
    handle = load_dataset(cfg)
    arch = _arch(cfg, handle.samples.shape[1])
    tcfg = _train_cfg(cfg)
    log_path = out / "train_log.csv"
    log = _CsvLog(log_path)
    try:
        if cfg["gan"]["kind"] == "vanilla":
            model = gan.train_vanilla_gan(handle.samples, arch, tcfg, _prior(cfg), log)
        elif cfg["gan"]["kind"] == "wasserstein":
            model = gan.train_wgan_gp(handle.samples, arch, tcfg, _prior(cfg), log)
        else:
            raise ConfigError(f"unknown gan.kind {cfg['gan']['kind']!r}")
    finally:
        log.close()
    ckpt = _resolve(out, cfg["gan"]["checkpoint"])
    gan.save_model(model, ckpt)
    _update_manifest(out, cfg, "train", [ckpt, Path(str(ckpt) + ".json"), log_path], [ckpt])
    return [ckpt, log_path]


def cmd_finetune(cfg):
    out = _out_dir(cfg)
    _save_config(out, cfg)
    src = _resolve(out, cfg["gan"]["checkpoint"])
    if not src.exists():
        raise MissingArtifact(f"checkpoint not found: {src} (run `train` first)")
    model = gan.load_model(src)
    handle = load_dataset(cfg)
    f = cfg["finetune"]
    log_path = out / "finetune_log.csv"
    log = _CsvLog(log_path)
    try:
        tuned = gan.fine_tune(model, handle.samples, f["steps"], f["lr_critic"], f["lr_gen"],
                              _train_cfg(cfg), log)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    finally:
        log.close()
    dst = _resolve(out, f["checkpoint"])
    gan.save_model(tuned, dst)
    _update_manifest(out, cfg, "finetune", [dst, Path(str(dst) + ".json"), log_path], [src, dst])
    return [dst, log_path]


def cmd_calibrate(cfg):
    out = _out_dir(cfg)
    _save_config(out, cfg)
    model = load_run_model(cfg, out, need_calibration=False)
    c = cfg["calibrate"]
    calib = gan.calibrate_critic(model, c["n_samples"], c["seed"])
    path = out / "calibration.json"
    _write_atomic(path, json.dumps(asdict(calib), indent=2, sort_keys=True) + "\n")
    _update_manifest(out, cfg, "calibrate", [path], [model_path(cfg, out)])
    return [path]


def _method_specs(cfg, out):
    g = cfg["geodesic"]
    fmap = None
    specs = []
    for name in g["methods"]:
        try:
            kind = geodesic.method_name(name)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if kind in ("Feat", "FeatD") and fmap is None:
            if not g["feature_map"]:
                raise ConfigError(f"method {kind} needs geodesic.feature_map")
            p = _resolve(out, g["feature_map"])
            if not p.exists():
                raise MissingArtifact(f"feature map not found: {p}")
            nets, _ = nnet.load_networks(p)
            fmap = geodesic.FeatureMap(nets["feature"], g["feature_taps"] or None)
        specs.append(geodesic.MethodSpec(kind, g["lambda"], g["eps"], fmap,
                                         g["geometric_averaging"], g["ensemble_size"]))
    return specs


def _geo_cfg(cfg):
    g = cfg["geodesic"]
    try:
        return geodesic.GeodesicConfig(g["n_interp_pts"], g["poly_degree"], g["n_train_steps"],
                                       g["learn_rate"], g["coefficient_init"], g["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def pair_seeds(cfg, k):
    return cfg["geodesic"]["start"] + 1000 * k, cfg["geodesic"]["end"] + 1000 * k


def cmd_interpolate(cfg):
    out = _out_dir(cfg)
    _save_config(out, cfg)
    specs = _method_specs(cfg, out)
    model = load_run_model(cfg, out)
    gcfg = _geo_cfg(cfg)
    n_eval = cfg["eval"]["n_eval_pts"]
    data = load_dataset(cfg).samples if cfg["dataset"]["name"] == "swiss_roll" else None
    paths_dir = out / "paths"
    paths_dir.mkdir(exist_ok=True)
    written = []
    chash = cfg.hash()
    for k in range(cfg["geodesic"]["n_pairs"]):
        s_seed, e_seed = pair_seeds(cfg, k)
        z_s = datasets.sample_latent(model.latent_prior, 1, model.latent_dim, s_seed)[0]
        z_e = datasets.sample_latent(model.latent_prior, 1, model.latent_dim, e_seed)[0]
        reports = []
        for spec in specs:
            meta = {"start_seed": s_seed, "end_seed": e_seed, "pair": k}
            if spec.kind == "LinearSample":
                x = geodesic.linear_sample_space_path(model.generate(z_s)[0], model.generate(z_e)[0], n_eval)
                rep = evaluation.evaluate_sample_path(x, model, None, "LinearSample", gcfg.seed, chash)
                rep.meta["latent_dim"] = model.latent_dim
            else:
                if spec.kind == "Linear":
                    curve = geodesic.linear_path(z_s, z_e)
                else:
                    curve = geodesic.ensemble_optimize(z_s, z_e, model, spec, gcfg)
                rep = evaluation.evaluate_path(curve, model, spec, n_eval, None, gcfg, gcfg.seed, chash)
                meta["coefficients"] = json.dumps(curve.free_coeffs.tolist())
            path = paths_dir / f"pair{k:03d}_{spec.kind}.csv"
            evaluation.write_path_csv(rep, path, meta)
            written.append(path)
            reports.append(rep)
        svg = paths_dir / f"pair{k:03d}_comparison.svg"
        plotting.path_comparison(reports, svg, data)
        written.append(svg)
    _update_manifest(out, cfg, "interpolate", written, [model_path(cfg, out)])
    return written


def cmd_evaluate(run_dir):
    out = Path(run_dir)
    cfg_path = out / "config.ini"
    files = sorted((out / "paths").glob("*.csv")) if (out / "paths").is_dir() else []
    if not cfg_path.exists() or not files:
        raise MissingArtifact(f"{out}: no path artifacts to evaluate (run `interpolate` first)")
    cfg = config_mod.load(cfg_path)
    groups = defaultdict(list)
    reports = {}
    for f in files:
        rep = evaluation.read_path_csv(f)
        groups[rep.method].append(rep)
        reports[f] = rep

    written = []
    critic_sum, sq_sum = {}, {}
    for method in sorted(groups):
        reps = groups[method]
        try:
            cs = evaluation.summarize_traces(reps, "critic_norm")
            ss = evaluation.summarize_traces(reps, "sq_step")
        except ValueError as exc:
            raise evaluation.ArtifactError(str(exc)) from None
        critic_sum[method], sq_sum[method] = cs, ss
        rows = [(i, cs.mean[i], cs.stderr[i], ss.mean[i], ss.stderr[i]) for i in range(len(cs.mean))]
        p = out / f"summary_{method}.csv"
        evaluation.write_table(p, ["position", "critic_mean", "critic_stderr", "sq_step_mean",
                                   "sq_step_stderr"], rows)
        written.append(p)
    for name, summ, label in (("critic_traces.svg", critic_sum, "normalized critic"),
                              ("sq_step_traces.svg", sq_sum, "squared difference")):
        plotting.trace_bands(summ, out / name, label)
        written.append(out / name)

    model = load_run_model(cfg, out, need_calibration=False)
    handle = load_dataset(cfg)
    e = cfg["eval"]
    n_real = min(e["n_hist"], len(handle.samples))
    real = handle.samples[np.random.default_rng(e["seed"]).permutation(len(handle.samples))[:n_real]]
    hist = evaluation.critic_histogram(model, None, real, e["n_hist"], e["hist_bins"], e["seed"])
    rows = [(hist.edges[i], hist.edges[i + 1], int(hist.real[i]), int(hist.fake[i]))
            for i in range(len(hist.real))]
    evaluation.write_table(out / "histogram.csv", ["lo", "hi", "real", "fake"], rows)
    plotting.histogram(hist, out / "histogram.svg")
    written += [out / "histogram.csv", out / "histogram.svg"]

    if cfg["dataset"]["name"] == "swiss_roll":
        spec = swiss_spec(cfg)
        delta = e["coverage_delta"] if e["coverage_delta"] is not None else 3.0 * spec.noise_std
        rows = []
        for f, rep in reports.items():
            rows.append((f.name, rep.method, evaluation.manifold_coverage(rep, spec, delta),
                         float(np.mean(rep.critic_norm)), delta))
        evaluation.write_table(out / "coverage.csv", ["file", "method", "coverage", "mean_critic", "delta"], rows)
        written.append(out / "coverage.csv")
    _update_manifest(out, cfg, "evaluate", written, [model_path(cfg, out)])
    return written


# --- entry point ------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="latentgeo", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="run configuration (.ini)")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a configuration value (repeatable)")
        sp.add_argument("--output-dir", help="override run.output_dir")
        return sp

    with_config("gen-data", "generate or load the dataset and export it as CSV")
    with_config("train", "train the GAN")
    with_config("finetune", "fine-tune with a faster critic than generator")
    with_config("calibrate", "record the critic value range")
    sp = with_config("interpolate", "compute interpolation paths")
    sp.add_argument("--start-seed", type=int)
    sp.add_argument("--end-seed", type=int)
    sp.add_argument("--n-pairs", type=int)
    sp.add_argument("--methods", nargs="+", help="methods, e.g. Linear SqDiff SqDiffD LinearSample")
    sp = sub.add_parser("evaluate", help="summarize the path artifacts of a run directory")
    sp.add_argument("run_dir")
    return p


def _resolve_config(args):
    cfg = config_mod.load(args.config)
    overrides = list(args.set)
    if args.output_dir:
        overrides.append(f"run.output_dir={args.output_dir}")
    if getattr(args, "start_seed", None) is not None:
        overrides.append(f"geodesic.start={args.start_seed}")
    if getattr(args, "end_seed", None) is not None:
        overrides.append(f"geodesic.end={args.end_seed}")
    if getattr(args, "n_pairs", None) is not None:
        overrides.append(f"geodesic.n_pairs={args.n_pairs}")
    if getattr(args, "methods", None):
        overrides.append("geodesic.methods=" + ",".join(args.methods))
    return config_mod.apply_overrides(cfg, overrides)


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "finetune": cmd_finetune,
            "calibrate": cmd_calibrate, "interpolate": cmd_interpolate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "evaluate":
            written = cmd_evaluate(args.run_dir)
        else:
            written = COMMANDS[args.command](_resolve_config(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, gan.DegenerateCritic) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MissingArtifact, evaluation.ArtifactError, datasets.IdxFormatError, FileNotFoundError) as exc:
        print(f"missing or invalid artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    for w in written:
        print(w)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
