"""``rppg-bp`` command line: synth, extract, pipeline, train, predict, eval.

Exit status is 0 on success, 1 for usage or configuration mistakes and 2 for
problems with the input data. Diagnostics are one line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .beats import ScreenResult, ScreenStatus, SessionResult, process_session
from .config import RunConfig
from .errors import ConstantSignal, RppgBpError
from .estimators import BPRegressor, HypertensionClassifier, pack_inputs
from .evaluation import bland_altman, stratified_report
from .features import FEATURE_LAYOUT_VERSION, ProfileEncoder, read_profiles_jsonl, write_profiles_jsonl
from .io import (SCREEN_FIELDS, WINDOWS_FORMAT_VERSION, read_labels_jsonl, read_predictions_csv,
                 read_windows_jsonl, screen_row, write_labels_jsonl, write_predictions_csv, write_rows_csv,
                 write_windows_jsonl)
from .neural.checkpoint import FORMAT_VERSION as CHECKPOINT_FORMAT_VERSION
from .neural.model import Head, Variant
from .plotting import agreement_svg
from .rppg import read_manifest, read_mask, extract_rgb_means, extract_rppg, save_frame, write_manifest
from .signal_core import FilterSpec, PeakSpec, read_signal_csv, write_signal_csv
from .synth import Rhythm, frames_from_signal, make_dataset

logger = logging.getLogger("rppg_bp")

REPORT_FORMAT_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_config(args) -> RunConfig:
    try:
        return RunConfig.load(args.config, args.set or ())
    except (ValueError, TypeError) as exc:
        raise UsageError(f"config: {exc}") from None


# ---------------------------------------------------------------- synth

def cmd_synth(args, cfg: RunConfig) -> None:
    s = cfg.synth
    sessions = make_dataset(s.n_sessions, cfg.seed, [Rhythm(r) for r in s.rhythms], s.duration_s,
                            {"white_sd": s.white_sd, "wander_amp": s.wander_amp},
                            s.sessions_per_subject, s.fs)
    out = Path(args.out)
    (out / "signals").mkdir(parents=True, exist_ok=True)
    for sess in sessions:
        write_signal_csv(out / "signals" / f"{sess.session_id}.csv", sess.signal)
        if args.frames:
            fdir = out / "frames" / sess.session_id
            fdir.mkdir(parents=True, exist_ok=True)
            frames = frames_from_signal(sess.signal, seed=sess.seed % 2**32, quantize=True)
            names = [f"f{i:06d}.png" for i in range(len(frames))]
            for name, frame in zip(names, frames):
                save_frame(fdir / name, frame)
            write_manifest(fdir / "manifest.json", names, sess.signal.fs)
    write_labels_jsonl(out / "labels.jsonl", [
        {"session_id": x.session_id, "subject_id": x.subject_id, "true_sbp": x.true_sbp,
         "true_dbp": x.true_dbp, "rhythm": x.rhythm.value} for x in sessions])
    write_profiles_jsonl(out / "profiles.jsonl", [(x.session_id, x.subject_id, x.profile) for x in sessions])
    print(f"wrote {len(sessions)} sessions to {out}")


# ---------------------------------------------------------------- extract

def cmd_extract(args, cfg: RunConfig) -> None:
    fs, frames = read_manifest(args.manifest)
    mask = read_mask(args.mask) if args.mask else None
    write_signal_csv(args.out, extract_rppg(frames, fs, mask))
    if args.rgb_out:
        means = extract_rgb_means(frames, mask)
        np.savetxt(args.rgb_out, means, delimiter=",", header="r,g,b", comments="", fmt="%r")
    print(f"extracted {len(frames)} samples to {args.out}")


# ---------------------------------------------------------------- pipeline

def _process_one(path: str, cfg_doc: dict, sqi_screen: bool):
    cfg = RunConfig.from_dict(cfg_doc)
    sc = cfg.screening
    raw = read_signal_csv(path)
    try:
        result = process_session(
            raw, FilterSpec(**vars(cfg.filter)), PeakSpec(**vars(cfg.peaks)), sc.min_peaks, sc.sqi_threshold,
            sc.window_beats, sc.max_windows, sc.pad_length, sqi_screen)
    except ConstantSignal:
        # a flat trace has no detectable peaks at all
        result = SessionResult(ScreenResult(ScreenStatus.TOO_FEW_PEAKS, 0))
    return result


def _signal_paths(inputs) -> list[Path]:
    paths = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.csv")))
        else:
            paths.append(p)
    if not paths:
        raise RppgBpError("no signal files found")
    return paths


def cmd_pipeline(args, cfg: RunConfig) -> None:
    paths = _signal_paths(args.signals)
    sqi_screen = cfg.screening.sqi_screen and not args.no_sqi_screen
    doc = cfg.to_dict()
    jobs = max(1, args.jobs)
    if jobs == 1:
        results = [_process_one(str(p), doc, sqi_screen) for p in paths]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            # map yields in submission order, so the output order never depends on timing
            results = list(pool.map(_process_one, [str(p) for p in paths], [doc] * len(paths),
                                    [sqi_screen] * len(paths)))
    rows = []
    with open(args.out, "w") as fh:
        for path, result in zip(paths, results):
            write_windows_jsonl(fh, path.stem, result, cfg.screening.pad_length)
            rows.append(screen_row(path.stem, result))
    write_rows_csv(args.screen_log, SCREEN_FIELDS, rows)
    accepted = sum(r["status"] == ScreenStatus.ACCEPTED.value for r in rows)
    print(f"{accepted}/{len(rows)} sessions accepted; {sum(r['n_windows'] for r in rows)} windows written")


# ---------------------------------------------------------------- train / predict

def _assemble(windows: dict, profiles: dict | None, norm: dict | None, variant: Variant, session_ids):
    use_w = variant is not Variant.BASELINE
    use_f = variant is not Variant.PPG
    if use_f and profiles is None:
        raise UsageError(f"--profiles is required for the {variant.value} variant")
    w_rows, f_rows, sid_rows, encoder = [], [], [], None
    if use_f:
        missing = [s for s in session_ids if s not in profiles]
        if missing:
            raise RppgBpError(f"no profile for session {missing[0]}")
        encoder = ProfileEncoder(norm).fit([profiles[s][1] for s in session_ids])
    for sid in session_ids:
        k = len(windows[sid])
        sid_rows.extend([sid] * k)
        if use_w:
            w_rows.append(windows[sid])
        if use_f:
            f_rows.append(np.repeat(encoder.transform([profiles[sid][1]]), k, axis=0))
    X = pack_inputs(np.concatenate(w_rows) if use_w else None, np.concatenate(f_rows) if use_f else None)
    return X, np.array(sid_rows), (encoder.norm_ if encoder else None)


def cmd_train(args, cfg: RunConfig) -> None:
    windows = read_windows_jsonl(args.windows, cfg.train.windows_per_session)
    labels = read_labels_jsonl(args.labels)
    profiles = read_profiles_jsonl(args.profiles) if args.profiles else None
    sids = [s for s in windows if s in labels]
    if not sids:
        raise RppgBpError("no windowed session has a label")
    m = cfg.model
    variant, head = Variant(m.variant), Head(m.head)
    X, sid_rows, norm = _assemble(windows, profiles, None, variant, sids)
    groups = np.array([labels[s]["subject_id"] for s in sid_rows])
    sbp = np.array([labels[s]["true_sbp"] for s in sid_rows])
    model_cfg = {k: v for k, v in vars(m).items() if k not in ("variant", "head")}
    params = dict(variant=variant.value, epochs=cfg.train.epochs, batch_size=cfg.train.batch_size,
                  learning_rate=cfg.train.learning_rate, train_fraction=cfg.train.train_fraction,
                  select_best=cfg.train.select_best, random_state=cfg.seed, model_config=model_cfg)
    if head is Head.BINARY:
        est = HypertensionClassifier(**params).fit(X, (sbp >= cfg.sbp_threshold).astype(int), groups)
    else:
        y = np.column_stack([sbp, [labels[s]["true_dbp"] for s in sid_rows]])
        est = BPRegressor(**params).fit(X, y, groups)
    doc = est.to_doc(norm)
    doc["sbp_threshold"] = cfg.sbp_threshold
    doc["validation_subjects"] = sorted(set(groups[~est.train_mask_].tolist()))
    with open(args.out, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")
    if args.log:
        write_rows_csv(args.log, ("epoch", "train_loss", "val_loss"), est.history_)
    print(f"trained {variant.value}/{head.value} on {len(sids)} sessions ({len(X)} windows); "
          f"checkpoint {args.out}")


def cmd_predict(args, cfg: RunConfig) -> None:
    with open(args.checkpoint) as fh:
        doc = json.load(fh)
    head = Head(doc["model_config"]["head"])
    est = (HypertensionClassifier if head is Head.BINARY else BPRegressor).from_doc(doc)
    variant = est.model_.cfg.variant
    windows = read_windows_jsonl(args.windows, args.windows_per_session)
    if not windows:
        raise RppgBpError("windows file holds no windows")
    profiles = read_profiles_jsonl(args.profiles) if args.profiles else None
    sids = list(windows)
    X, sid_rows, _ = _assemble(windows, profiles, doc.get("norm"), variant, sids)
    preds = est.predict_sessions(X, sid_rows)
    write_predictions_csv(args.out, preds)
    print(f"predicted {len(preds)} sessions to {args.out}")


# ---------------------------------------------------------------- eval

def cmd_eval(args, cfg: RunConfig) -> None:
    preds = read_predictions_csv(args.predictions)
    labels = read_labels_jsonl(args.labels)
    missing = [s for s in preds if s not in labels]
    if missing:
        raise RppgBpError(f"no label for predicted session {missing[0]}")
    sids = list(preds)
    rhythm = [labels[s]["rhythm"] for s in sids]
    true_cls = np.array([labels[s]["true_sbp"] >= cfg.sbp_threshold for s in sids], dtype=int)
    first = preds[sids[0]]
    out = {"format_version": REPORT_FORMAT_VERSION, "sbp_threshold": cfg.sbp_threshold}
    tables = []
    if "sbp" in first:
        sbp = np.array([preds[s]["sbp"] for s in sids])
        pred_cls = (sbp >= cfg.sbp_threshold).astype(int)
        for key in ("sbp", "dbp"):
            p = np.array([preds[s][key] for s in sids])
            t = np.array([labels[s][f"true_{key}"] for s in sids])
            rep = stratified_report(p, t, rhythm, pred_cls if key == "sbp" else None,
                                    true_cls if key == "sbp" else None)
            out[key] = rep.to_dict()
            tables.append(f"{key.upper()}\n" + rep.to_table())
        sbp_true = np.array([labels[s]["true_sbp"] for s in sids])
        if args.bland_altman:
            write_rows_csv(args.bland_altman, ("session_id", "mean", "difference"),
                           [{"session_id": s, "mean": m, "difference": d}
                            for s, (m, d) in zip(sids, bland_altman(sbp, sbp_true)["pairs"])])
        if args.svg:
            ba = out["sbp"]["bland_altman"]
            Path(args.svg).write_text(agreement_svg(sbp, sbp_true, ba["bias"], ba["loa_low"], ba["loa_high"]))
    else:
        from .evaluation import classification_metrics

        pred_cls = np.array([preds[s]["class"] for s in sids], dtype=int)
        out["classification"] = classification_metrics(pred_cls, true_cls)
        c = out["classification"]
        tables.append("Classification (SBP >= %g mm Hg)\n" % cfg.sbp_threshold + "".join(
            f"  {k:<14}{'n/a' if c[k] is None else f'{100 * c[k]:.1f}%':>10}\n"
            for k in ("accuracy", "ppv", "npv", "sensitivity", "specificity")))
    with open(args.out, "w") as fh:
        json.dump(out, fh, indent=1, sort_keys=True)
        fh.write("\n")
    table = "\n".join(tables)
    if args.table:
        Path(args.table).write_text(table)
    else:
        sys.stdout.write(table)


# ---------------------------------------------------------------- entry point

def _version_text() -> str:
    return (f"rppg-bp {__version__} (checkpoint format {CHECKPOINT_FORMAT_VERSION}, "
            f"windows format {WINDOWS_FORMAT_VERSION}, feature layout {FEATURE_LAYOUT_VERSION})")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config value, e.g. train.epochs=5 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = _Parser(prog="rppg-bp", description="Camera-based blood pressure estimation pipeline.")
    p.add_argument("--version", action="version", version=_version_text())
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="write a labelled synthetic dataset")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--frames", action="store_true", help="also render 72x72 PNG frame sequences")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("extract", parents=[common], help="frames manifest to rPPG signal CSV")
    s.add_argument("--manifest", required=True)
    s.add_argument("--mask", help="72-line 0/1 mask file (default: eye band excluded)")
    s.add_argument("--out", required=True)
    s.add_argument("--rgb-out", help="optionally write per-frame R,G,B means")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("pipeline", parents=[common], help="signals to beat windows plus screen log")
    s.add_argument("signals", nargs="+", help="signal CSV files or directories of them")
    s.add_argument("--out", required=True, help="windows JSONL")
    s.add_argument("--screen-log", required=True, help="per-session screening CSV")
    s.add_argument("--no-sqi-screen", action="store_true", help="skip the SQI-based exclusion step")
    s.add_argument("--jobs", type=int, default=1, help="sessions processed in parallel")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("train", parents=[common], help="windows and labels to checkpoint")
    s.add_argument("--windows", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--profiles", help="profiles JSONL (Baseline and Hybrid variants)")
    s.add_argument("--out", required=True, help="checkpoint JSON")
    s.add_argument("--log", help="training log CSV")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", parents=[common], help="checkpoint and windows to session predictions")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--windows", required=True)
    s.add_argument("--profiles")
    s.add_argument("--windows-per-session", type=int, default=None,
                   help="use only the best N windows of each session")
    s.add_argument("--out", required=True, help="predictions CSV")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("eval", parents=[common], help="predictions and labels to report")
    s.add_argument("--predictions", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--out", required=True, help="report JSON")
    s.add_argument("--table", help="write the text table here instead of stdout")
    s.add_argument("--bland-altman", help="Bland-Altman pairs CSV (SBP)")
    s.add_argument("--svg", help="SVG scatter and Bland-Altman plot (SBP)")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        cfg = _load_config(args)
        args.func(args, cfg)
    except UsageError as exc:
        print(f"rppg-bp: usage error: {exc}", file=sys.stderr)
        return 1
    except (RppgBpError, ValueError, KeyError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"rppg-bp: data error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
