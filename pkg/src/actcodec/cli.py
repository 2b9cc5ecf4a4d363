"""Command-line entry point.

Subcommands cover the full lifecycle: synth (seeded corpora), train,
encode/decode (codec I/O over record files), eval (reconstruction and
vocabulary metrics), stats, bar-sim (block-autoregressive policy toy and
latency accounting), report (merged plot-ready tables), and serve (the HTTP
inference service). Every command that writes outputs drops a resolved
key = value snapshot next to them.

Exit codes: 0 success, 1 internal failure, 2 usage or input error.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import click
import numpy as np

from actcodec import __version__, blockar, metrics
from actcodec.codec import ChunkCodec
from actcodec.config import RunConfig
from actcodec.records import (load_code_records, save_chunk_records,
                              save_code_records)
from actcodec.training import TrainState, run_training
from actcodec.trajectory import (NormalizationStats, fit_normalizer,
                                 fit_normalizer_per_tag, load_corpus,
                                 load_stats_file, load_trajectories, read_manifest,
                                 save_chunks, save_stats_per_tag, synth_corpus,
                                 write_manifest)


def _require_file(path: str | Path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise click.UsageError(f"{what} not found: {path}")
    return path


def _resolve_config(path: str) -> Path:
    """Look for the config file directly, then under $ACTCODEC_CONFIG_DIR."""
    p = Path(path)
    if p.exists():
        return p
    cfg_dir = os.environ.get("ACTCODEC_CONFIG_DIR")
    if cfg_dir and (Path(cfg_dir) / path).exists():
        return Path(cfg_dir) / path
    raise click.UsageError(f"config file not found: {path}")


def _write_snapshot(out_dir: Path, values: dict, name: str = "resolved_config.txt"):
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"{k} = {values[k]}" for k in sorted(values)]
    (out_dir / name).write_text("\n".join(lines) + "\n")


def _load_data(manifest: Path, horizon: int, stride: int, norm_stats: str | None):
    stats = None
    if norm_stats:
        stats = load_stats_file(_require_file(norm_stats, "normalization stats"))
    try:
        chunks = load_corpus(manifest, horizon, stride, stats)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    if not chunks:
        raise click.UsageError(f"no chunks loaded from {manifest}")
    values = np.stack([c.values for c in chunks]).astype(np.float32)
    valid = np.stack([c.valid for c in chunks])
    tags = [c.embodiment_tag for c in chunks]
    return values, valid, tags


@click.group()
@click.version_option(__version__)
def main():
    """Residual-VQ action-chunk codec tools."""


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n", type=int, default=256, show_default=True, help="Number of chunks.")
@click.option("--chunk-size", type=int, default=20, show_default=True)
@click.option("--dims", type=int, default=7, show_default=True)
@click.option("--profile", type=click.Choice(["smooth", "piecewise", "gripper-binary"]),
              default="smooth", show_default=True)
@click.option("--tag", default=None, help="Embodiment tag (default synthetic-<profile>).")
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
def synth(seed, n, chunk_size, dims, profile, tag, out):
    """Generate a seeded synthetic corpus with a manifest and identity stats."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    chunks = synth_corpus(seed, n, chunk_size, dims, profile)
    if tag:
        for c in chunks:
            c.embodiment_tag = tag
    save_chunks(out_dir / "data.traj", chunks)
    write_manifest(out_dir / "manifest.txt",
                   [("data.traj", tag or f"synthetic-{profile}")], normalized=True)
    NormalizationStats.identity(dims).save(out_dir / "norm_stats.json")
    _write_snapshot(out_dir, {"command": "synth", "seed": seed, "n": n,
                              "chunk_size": chunk_size, "dims": dims, "profile": profile})
    click.echo(f"wrote {n} chunks to {out_dir / 'data.traj'}")


@main.command(name="fit-norm")
@click.option("--data", required=True, type=click.Path(), help="Dataset manifest (raw units).")
@click.option("--out", required=True, type=click.Path(), help="Stats JSON to write.")
@click.option("--pooled", is_flag=True,
              help="Pool all embodiments into one global bound (default: per-embodiment).")
def fit_norm(data, out, pooled):
    """Fit percentile normalization bounds from a raw-unit corpus."""
    manifest = _require_file(data, "data manifest")
    if pooled:
        entries, _ = read_manifest(manifest)
        trajs = []
        for name, _tag in entries:
            trajs.extend(load_trajectories(manifest.parent / name))
        fit_normalizer(trajs).save(out)
    else:
        save_stats_per_tag(out, fit_normalizer_per_tag(manifest))
    click.echo(f"wrote {out}")


@main.command()
@click.option("--config", "config_path", required=True, help="key = value config file.")
@click.option("--data", required=True, type=click.Path(), help="Dataset manifest.")
@click.option("--out", required=True, type=click.Path(), help="Run directory.")
@click.option("--resume", type=click.Path(), default=None, help="Checkpoint to resume from.")
@click.option("--chunk-size", type=int, default=None, help="Override config chunk size.")
@click.option("--stride", type=int, default=None, help="Override config stride.")
@click.option("--patch-spec", default=None,
              help="Patch plan: preset name (per-dim, 7dof, 14dof, 21dof) or a JSON file.")
@click.option("--norm-stats", default=None, help="Normalization stats JSON (for raw data).")
def train(config_path, data, out, resume, chunk_size, stride, patch_spec, norm_stats):
    """Train a codec on a chunked corpus."""
    cfg = RunConfig.from_file(_resolve_config(config_path),
                              overrides={"chunk_size": chunk_size, "stride": stride,
                                         "patch_preset": patch_spec})
    manifest = _require_file(data, "data manifest")
    values, valid, _ = _load_data(manifest, cfg["chunk_size"], cfg["stride"], norm_stats)
    out_dir = Path(out)
    cfg.write_snapshot(out_dir)
    if resume:
        state = TrainState.load(_require_file(resume, "resume checkpoint"))
    else:
        state = TrainState.fresh(cfg.codec_config(), cfg.train_config())
    sched = blockar.build_schedule(state.codec.config.n_stages, state.codec.config.model.c_h,
                                   state.codec.config.model.c_a,
                                   min(cfg["block_size"], state.codec.n_tokens))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "schedule.txt").write_text(blockar.schedule_to_text(sched))
    click.echo(f"training for {state.cfg.total_steps - state.step} steps "
               f"({state.codec.n_parameters()} parameters, {values.shape[0]} chunks)")
    records = run_training(state, values, valid, out_dir)
    if records:
        final = records[-1]
        click.echo(f"done: step {final['step']} loss {final['total']:.5f}")
    click.echo(f"checkpoint: {out_dir / 'ckpt_latest.bin'}")


@main.command()
@click.option("--ckpt", required=True, type=click.Path(), help="Codec checkpoint.")
@click.option("--data", required=True, type=click.Path(), help="Dataset manifest.")
@click.option("--out", required=True, type=click.Path(), help="Output code-record file.")
@click.option("--stride", type=int, default=None, help="Chunking stride (default: chunk size).")
@click.option("--norm-stats", default=None)
def encode(ckpt, data, out, stride, norm_stats):
    """Encode a corpus to one code tensor per chunk."""
    codec = _load_codec(ckpt)
    horizon = codec.config.patch.H
    values, valid, tags = _load_data(_require_file(data, "data manifest"),
                                     horizon, stride or horizon, norm_stats)
    codes = codec.encode(values)
    save_code_records(out, codes, {"config": codec.config.to_dict(), "tags": tags})
    _write_snapshot(Path(out).parent, {"command": "encode", "ckpt": ckpt, "data": data,
                                       "stride": stride or horizon},
                    name="resolved_encode.txt")
    click.echo(f"encoded {codes.shape[0]} chunks x {codec.n_tokens} tokens -> {out}")


def _load_codec(ckpt) -> ChunkCodec:
    path = _require_file(ckpt, "checkpoint")
    try:
        codec, _, _ = ChunkCodec.load(path)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    return codec


@main.command()
@click.option("--ckpt", required=True, type=click.Path())
@click.option("--codes", "codes_path", required=True, type=click.Path(), help="Code-record file.")
@click.option("--out", required=True, type=click.Path(), help="Output chunk-record file.")
def decode(ckpt, codes_path, out):
    """Decode code records back into action chunks."""
    codec = _load_codec(ckpt)
    try:
        codes, meta = load_code_records(_require_file(codes_path, "code records"))
    except ValueError as exc:
        raise click.UsageError(str(exc))
    if codes.shape[0] == 0:
        save_chunk_records(out, np.zeros((0, codec.config.patch.H, codec.config.patch.D), np.float32),
                           np.zeros((0, codec.config.patch.H), bool), [])
        click.echo("no code records; wrote empty output")
        return
    expected = (codec.config.n_stages, codec.config.model.c_h, codec.config.model.c_a)
    if codes.shape[1:] != expected:
        raise click.UsageError(f"code shape {codes.shape[1:]} does not match codec {expected}")
    bad = np.flatnonzero((codes < 0).any(axis=(1, 2, 3)) |
                         (codes >= codec.config.codebook_size).any(axis=(1, 2, 3)))
    if bad.size:
        raise click.UsageError(
            f"record {int(bad[0])} holds a code index outside "
            f"[0, {codec.config.codebook_size}); refusing to decode"
        )
    values = codec.decode(codes)
    tags = meta.get("codec", {}).get("tags") or ["decoded"] * values.shape[0]
    save_chunk_records(out, values, np.ones(values.shape[:2], bool), tags)
    click.echo(f"decoded {values.shape[0]} chunks -> {out}")


@main.command(name="eval")
@click.option("--ckpt", required=True, type=click.Path())
@click.option("--data", required=True, type=click.Path())
@click.option("--sigmas", default="1e-3,3e-3,1e-2,3e-2,1e-1", show_default=True,
              help="Comma-separated tolerances (normalized units).")
@click.option("--out", required=True, type=click.Path(), help="Report directory.")
@click.option("--bins", type=int, default=256, show_default=True,
              help="Bins for the naive per-scalar baseline (0 disables).")
@click.option("--per-scalar", is_flag=True, help="Score each scalar against sigma instead of each timestep vector.")
@click.option("--stride", type=int, default=None)
@click.option("--norm-stats", default=None)
@click.option("--label", default="rvq-codec", show_default=True, help="Series label in report tables.")
def eval_cmd(ckpt, data, sigmas, out, bins, per_scalar, stride, norm_stats, label):
    """Reconstruction quality, vocabulary stats, and baseline comparison."""
    codec = _load_codec(ckpt)
    horizon = codec.config.patch.H
    values, valid, tags = _load_data(_require_file(data, "data manifest"),
                                     horizon, stride or horizon, norm_stats)
    sigma_list = [float(s) for s in sigmas.split(",") if s]
    if any(s <= 0 for s in sigma_list):
        raise click.UsageError("sigmas must be positive")
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)

    recon, codes = codec.reconstruct(values)
    sweep = metrics.vrr_sweep(lambda v: recon, values, valid, sigma_list, tags, per_scalar)
    stats = metrics.code_stats([np.moveaxis(codes, 0, 1)], codec.config.vocab_size,
                               codec.config.codebook_size)
    ratio = metrics.compression_ratio((horizon, codec.config.patch.D), codec.n_tokens)

    report = {
        "label": label,
        "sigmas": sweep["sigmas"],
        "vrr": sweep["overall"],
        "vrr_by_tag": sweep["by_tag"],
        "compression_ratio": ratio,
        "n_chunks": int(values.shape[0]),
        "n_tokens": codec.n_tokens,
        "code_stats": stats.to_dict(),
        "per_scalar": per_scalar,
    }
    if bins:
        recon_bin = metrics.binning_detokenize(metrics.binning_tokenize(values, bins), bins)
        bin_sweep = metrics.vrr_sweep(lambda v: recon_bin.astype(np.float32), values, valid,
                                      sigma_list, tags, per_scalar)
        report["baseline"] = {
            "label": f"binning-{bins}",
            "vrr": bin_sweep["overall"],
            "compression_ratio": 1.0,
            "n_tokens": horizon * codec.config.patch.D,
        }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    _emit_eval_tables(out_dir, [report])
    _write_snapshot(out_dir, {"command": "eval", "ckpt": ckpt, "data": data,
                              "sigmas": sigmas, "bins": bins, "per_scalar": per_scalar},
                    name="resolved_eval.txt")
    click.echo(json.dumps({"vrr": dict(zip(report["sigmas"], report["vrr"])),
                           "usage_pct": stats.usage_pct,
                           "compression_ratio": ratio}, indent=2))


def _emit_eval_tables(out_dir: Path, reports: list[dict]):
    """Columnar plot data: VRR vs sigma, VRR vs compression, per-tag heatmap."""
    sigmas = reports[0]["sigmas"]
    series = []
    for rep in reports:
        series.append((rep["label"], rep["vrr"]))
        if "baseline" in rep:
            series.append((rep["baseline"]["label"], rep["baseline"]["vrr"]))
    lines = ["sigma\t" + "\t".join(label for label, _ in series)]
    for i, s in enumerate(sigmas):
        lines.append(f"{s:g}\t" + "\t".join(f"{v[i]:.6f}" for _, v in series))
    (out_dir / "vrr_vs_sigma.tsv").write_text("\n".join(lines) + "\n")

    lines = ["tokenizer\tcompression_ratio\t" + "\t".join(f"vrr@{s:g}" for s in sigmas)]
    for rep in reports:
        row = [rep["label"], f"{rep['compression_ratio']:.4f}"]
        row += [f"{v:.6f}" for v in rep["vrr"]]
        lines.append("\t".join(row))
        if "baseline" in rep:
            base = rep["baseline"]
            row = [base["label"], f"{base['compression_ratio']:.4f}"]
            row += [f"{v:.6f}" for v in base["vrr"]]
            lines.append("\t".join(row))
    (out_dir / "vrr_vs_compression.tsv").write_text("\n".join(lines) + "\n")

    lines = ["tokenizer\ttag\t" + "\t".join(f"vrr@{s:g}" for s in sigmas)]
    for rep in reports:
        for tag, vals in sorted(rep["vrr_by_tag"].items()):
            lines.append("\t".join([rep["label"], tag] + [f"{v:.6f}" for v in vals]))
    (out_dir / "vrr_heatmap.tsv").write_text("\n".join(lines) + "\n")


@main.command()
@click.option("--codes", "codes_path", required=True, type=click.Path())
@click.option("--thresholds", default="1e-3,2e-2", show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Write JSON here instead of stdout.")
def stats(codes_path, thresholds, out):
    """Vocabulary-distribution statistics of a code-record file."""
    try:
        codes, meta = load_code_records(_require_file(codes_path, "code records"))
    except ValueError as exc:
        raise click.UsageError(str(exc))
    cfg = meta.get("codec", {}).get("config", {})
    codebook_size = cfg.get("codebook_size")
    if codebook_size is None:
        raise click.UsageError("code records carry no codec config")
    vocab = int(cfg["n_stages"]) * int(codebook_size)
    thresh = tuple(float(t) for t in thresholds.split(",") if t)
    result = metrics.code_stats([np.moveaxis(codes, 0, 1)], vocab, int(codebook_size), thresh)
    payload = json.dumps(result.to_dict(), indent=2) + "\n"
    if out:
        Path(out).write_text(payload)
        click.echo(f"wrote {out}")
    else:
        click.echo(payload, nl=False)


@main.command(name="bar-sim")
@click.option("--ckpt", type=click.Path(), default=None, help="Frozen codec checkpoint.")
@click.option("--data", type=click.Path(), default=None, help="Manifest; chunks become policy targets.")
@click.option("--schedule", "schedule_path", type=click.Path(), default=None,
              help="Plain-text schedule descriptor (default: derive from the codec).")
@click.option("--mode", type=click.Choice(["ar", "bar"]), default="bar", show_default=True)
@click.option("--block-size", type=int, default=None, help="Override schedule block size.")
@click.option("--examples", type=int, default=32, show_default=True)
@click.option("--policy-steps", type=int, default=1500, show_default=True)
@click.option("--top-k", type=int, default=1, show_default=True)
@click.option("--temperature", type=float, default=1.0, show_default=True)
@click.option("--per-pass-ms", type=float, default=7.4, show_default=True)
@click.option("--extra-ms", multiple=True, help="name=ms latency extras (repeatable).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--report", "report_dir", required=True, type=click.Path())
def bar_sim(ckpt, data, schedule_path, mode, block_size, examples, policy_steps,
            top_k, temperature, per_pass_ms, extra_ms, seed, report_dir):
    """Train a toy code policy and account for block-decoding latency."""
    out_dir = Path(report_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    extras = {}
    for item in extra_ms:
        if "=" not in item:
            raise click.UsageError(f"--extra-ms expects name=ms, got {item!r}")
        name, ms = item.split("=", 1)
        extras[name] = float(ms)

    codec = _load_codec(ckpt) if ckpt else None
    if schedule_path:
        sched = blockar.schedule_from_text(_require_file(schedule_path, "schedule").read_text())
    elif codec is not None:
        sched = blockar.build_schedule(codec.config.n_stages, codec.config.model.c_h,
                                       codec.config.model.c_a,
                                       block_size or min(codec.config.model.c_a, codec.n_tokens))
    else:
        raise click.UsageError("bar-sim needs --ckpt or --schedule")
    if block_size:
        sched = blockar.build_schedule(sched.n_stages, sched.c_h, sched.c_a, block_size)
    policy_sched = sched if mode == "bar" else blockar.build_schedule(
        sched.n_stages, sched.c_h, sched.c_a, 1)

    report = {
        "mode": mode,
        "schedule": sched.to_dict(),
        "n_tokens": sched.n_tokens,
        "n_blocks": sched.n_blocks,
        "pass_count": policy_sched.n_blocks,
        "latency": blockar.latency_model(per_pass_ms, sched, extras, mode=mode) if per_pass_ms else None,
    }
    (out_dir / "schedule.txt").write_text(blockar.schedule_to_text(sched))

    if codec is not None and data:
        horizon = codec.config.patch.H
        values, _, _ = _load_data(_require_file(data, "data manifest"), horizon, horizon, None)
        values = values[:examples]
        codes = codec.encode(values)
        rng = np.random.Generator(np.random.PCG64(seed))
        cfg = blockar.PolicyConfig()
        contexts = rng.standard_normal((codes.shape[0], cfg.context_dim)).astype(np.float32)
        policy = blockar.CodePolicy(codec.config.n_stages, codec.config.codebook_size,
                                    policy_sched, cfg, seed=seed)
        curve = blockar.train_policy(policy, contexts, codes, steps=policy_steps)
        matches = 0
        passes = None
        for i in range(codes.shape[0]):
            rollout = blockar.decode_rollout(policy, contexts[i], top_k=top_k,
                                             temperature=temperature, seed=seed + i)
            passes = rollout.pass_count
            matches += int(np.array_equal(rollout.codes, codes[i]))
        report["policy"] = {
            "examples": int(codes.shape[0]),
            "final_loss": curve[-1],
            "exact_match": matches / codes.shape[0],
            "rollout_passes": passes,
        }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    _write_snapshot(out_dir, {"command": "bar-sim", "mode": mode, "seed": seed,
                              "block_size": sched.block_size, "examples": examples,
                              "policy_steps": policy_steps},
                    name="resolved_barsim.txt")
    click.echo(json.dumps(report, indent=2))


@main.command()
@click.option("--eval", "eval_dirs", multiple=True, required=True, type=click.Path(),
              help="Eval report directories to merge (repeatable).")
@click.option("--out", required=True, type=click.Path())
def report(eval_dirs, out):
    """Merge eval reports into combined plot-ready tables."""
    reports = []
    for d in eval_dirs:
        path = _require_file(Path(d) / "report.json", "eval report")
        reports.append(json.loads(path.read_text()))
    base = reports[0]["sigmas"]
    for rep in reports[1:]:
        if rep["sigmas"] != base:
            raise click.UsageError("eval reports use different sigma grids")
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _emit_eval_tables(out_dir, reports)
    _write_snapshot(out_dir, {"command": "report", "inputs": ",".join(eval_dirs)},
                    name="resolved_report.txt")
    click.echo(f"wrote merged tables to {out_dir}")


@main.command()
@click.option("--ckpt", multiple=True, type=click.Path(), help="Checkpoints to preload (repeatable).")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8787, show_default=True)
def serve(ckpt, host, port):
    """Run the HTTP inference service."""
    import uvicorn

    from actcodec.service import create_app

    preload = {}
    for i, path in enumerate(ckpt, start=1):
        _require_file(path, "checkpoint")
        preload[f"codec-{i}"] = str(path)
    app = create_app(preload=preload)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
