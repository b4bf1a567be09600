"""Command-line pipeline driver.

Subcommands cover the full pipeline: synth (build a synthetic dataset),
prepare (detector-driven cropping), summary (parameter accounting), train
(fusion or temporal stage), extract (per-video fused-feature caches),
eval-loso (leave-one-subject-out evaluation), predict (single video), and
score-nips (clinical score to label).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 assertion
failure (--assert-paper mismatch).
"""

import argparse
import os
import sys
import warnings

import numpy as np

from . import config as cfgmod
from .checkpoint import _atomic_write, load_checkpoint, save_checkpoint
from .detect import FileDetectorAdapter, crop_resize, select_region
from .errors import BadConfig, PipelineError
from .evaluation import FRAME_LEVEL, VIDEO_LEVEL, VideoItem, run_loso
from .ingest import load_frames_dir, load_manifest, score_nips, to_binary_label
from .ingest import NipsAssessment
from .model import (Backbone, BackboneSpec, FusionHead, backbone_summary,
                    fusion_model_summary, train_fusion_head)
from .optim import AdamConfig
from .synth import SynthConfig, generate_dataset, write_dataset
from .temporal import (TemporalModel, TemporalSpec, make_windows,
                       predict_frame_level, predict_video_level,
                       temporal_model_summary, train_temporal)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_ASSERT = 4

# published totals asserted by `summary --assert-paper`
FUSION_TOTAL = 29474818
FUSION_TRAINABLE = 45442
TEMPORAL_TOTAL = 49841


def _common_flags(p):
    p.add_argument("--config", help="INI config file ([pipeline] section)")
    p.add_argument("--data-root", dest="data_root")
    p.add_argument("--work-dir", dest="work_dir")
    p.add_argument("--fps", type=float)
    p.add_argument("--crop-size", dest="crop_size", type=int)
    p.add_argument("--window-length", dest="window_length", type=int)
    p.add_argument("--window-stride", dest="window_stride", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--fusion-epochs", dest="fusion_epochs", type=int)
    p.add_argument("--temporal-epochs", dest="temporal_epochs", type=int)
    p.add_argument("--channel-scale", dest="channel_scale", type=int)
    p.add_argument("--output-dim", dest="output_dim", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="neopain",
        description="multi-channel temporal pain classification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    _common_flags(p)
    p.add_argument("--subjects", type=int, default=None)
    p.add_argument("--videos-per-subject", type=int, default=None)
    p.add_argument("--signal-strength", type=float, default=None)
    p.add_argument("--rater-disagreement", type=float, default=None)

    p = sub.add_parser("prepare", help="crop face/body regions per frame")
    _common_flags(p)

    p = sub.add_parser("summary", help="print model parameter summaries")
    _common_flags(p)
    p.add_argument("--model", choices=("fusion", "temporal", "backbone"),
                   default="fusion")
    p.add_argument("--assert-paper", action="store_true",
                   help="exit nonzero unless totals match the published counts")
    p.add_argument("--head-width", type=int, default=None,
                   help="override branch width in the fusion summary")

    p = sub.add_parser("train", help="train the fusion head or temporal model")
    _common_flags(p)
    p.add_argument("--stage", choices=("fusion", "temporal"), required=True)
    p.add_argument("--mode", choices=("video", "frame"), default="video",
                   help="temporal stage: whole videos or sliding windows")

    p = sub.add_parser("extract", help="write per-video fused-feature caches")
    _common_flags(p)

    p = sub.add_parser("eval-loso", help="leave-one-subject-out evaluation")
    _common_flags(p)
    p.add_argument("--mode", choices=("video", "frame"), default="video")

    p = sub.add_parser("predict", help="predict pain for one prepared video")
    _common_flags(p)
    p.add_argument("--video", required=True, help="video name (subject_period)")
    p.add_argument("--mode", choices=("video", "frame"), default="video")

    p = sub.add_parser("score-nips", help="clinical indicator scores -> label")
    p.add_argument("face", type=int)
    p.add_argument("body", type=int)
    p.add_argument("vital", type=int)
    p.add_argument("cry", type=int)
    return parser


def _resolve(args):
    cfg, sources = cfgmod.load_config(getattr(args, "config", None))
    overrides = {name: getattr(args, name, None)
                 for name in ("data_root", "work_dir", "fps", "crop_size",
                              "window_length", "window_stride",
                              "learning_rate", "batch_size", "fusion_epochs",
                              "temporal_epochs", "channel_scale", "output_dim",
                              "seed", "workers")}
    cfgmod.apply_overrides(cfg, sources, overrides)
    cfg.validate()
    return cfg, sources


def _write_text(path, text):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    _atomic_write(path, text.encode())


def _backbone(cfg):
    # deterministic stand-in so every stage sees identical frozen weights
    return Backbone.stand_in(channel_scale=cfg.channel_scale, seed=0)


def _video_name(subject_id, period_tag):
    return f"{subject_id}_{period_tag}"


def _manifest(cfg):
    return load_manifest(os.path.join(cfg.data_root, "manifest.csv"))


def _video_label(rows):
    by_rater = sorted(rows, key=lambda r: r.assessment.rater_id)
    total, _ = score_nips(by_rater[0].assessment)
    return int(to_binary_label(total).is_pain)


def _crops_path(cfg, name):
    return os.path.join(cfg.work_dir, "crops", name)


def _load_crops(cfg, name):
    d = _crops_path(cfg, name)
    face_p = os.path.join(d, "face.npy")
    body_p = os.path.join(d, "body.npy")
    if not (os.path.isfile(face_p) and os.path.isfile(body_p)):
        raise PipelineError(f"no prepared crops for {name}; run prepare first")
    return np.load(face_p), np.load(body_p)


def cmd_synth(cfg, sources, args):
    scfg = SynthConfig(seed=cfg.seed)
    if args.subjects is not None:
        scfg.n_subjects = args.subjects
    if args.videos_per_subject is not None:
        scfg.videos_per_subject = args.videos_per_subject
    if args.signal_strength is not None:
        scfg.signal_strength = args.signal_strength
    if args.rater_disagreement is not None:
        scfg.rater_disagreement = args.rater_disagreement
    ds = generate_dataset(scfg)
    write_dataset(ds, cfg.data_root)
    n_pain = sum(int(v.video_label.is_pain) for v in ds.videos)
    print(f"wrote {len(ds.videos)} videos ({n_pain} pain) for "
          f"{scfg.n_subjects} subjects to {cfg.data_root}")
    print(cfgmod.resolved_text(cfg, sources))
    return EXIT_OK


def cmd_prepare(cfg, sources, args):
    manifest = _manifest(cfg)
    root = os.path.dirname(os.path.abspath(manifest.path))
    log_lines = []
    total_degraded = 0
    for (subject, period_tag, video), _rows in sorted(manifest.by_video().items()):
        name = _video_name(subject, period_tag)
        vdir = video if os.path.isabs(video) else os.path.join(root, video)
        clip = load_frames_dir(vdir, cfg.fps, subject, period_tag)
        det_path = os.path.join(cfg.data_root, "detections", name + ".txt")
        adapters = {tag: FileDetectorAdapter(det_path, tag)
                    for tag in ("face", "body")}
        crops = {"face": [], "body": []}
        degraded = 0
        for i, frame in enumerate(clip.frames):
            for tag in ("face", "body"):
                box, bad = select_region(adapters[tag].detect(i), tag,
                                         frame_shape=frame.shape)
                degraded += int(bad)
                crops[tag].append(
                    crop_resize(frame, box.clamped(frame.shape[1],
                                                   frame.shape[0]),
                                tag, degraded=bad).pixels.astype(np.float32))
        out_dir = _crops_path(cfg, name)
        os.makedirs(out_dir, exist_ok=True)
        for tag in ("face", "body"):
            arr = np.stack(crops[tag])
            tmp = os.path.join(out_dir, tag + ".tmp.npy")  # np.save needs .npy
            np.save(tmp, arr)
            os.replace(tmp, os.path.join(out_dir, tag + ".npy"))
        total_degraded += degraded
        log_lines.append(f"{name} frames={len(clip.frames)} degraded={degraded}")
    log = "\n".join(log_lines) + f"\ntotal_degraded={total_degraded}\n"
    _write_text(os.path.join(cfg.work_dir, "prepare_log.txt"),
                log + cfgmod.resolved_text(cfg, sources) + "\n")
    print(log, end="")
    return EXIT_OK


def cmd_summary(cfg, sources, args):
    spec = BackboneSpec(channel_scale=cfg.channel_scale)
    if args.model == "backbone":
        summary = backbone_summary(spec)
    elif args.model == "fusion":
        summary = fusion_model_summary(spec, branch_units=args.head_width)
    else:
        summary = temporal_model_summary(TemporalSpec(output_dim=cfg.output_dim))
    print(summary.format_table())
    if args.assert_paper:
        if args.model == "fusion":
            expected = {"total": FUSION_TOTAL, "trainable": FUSION_TRAINABLE}
            got = {"total": summary.total_params,
                   "trainable": summary.trainable_params}
        elif args.model == "temporal":
            expected = {"total": TEMPORAL_TOTAL}
            got = {"total": summary.total_params}
        else:
            raise BadConfig("--assert-paper applies to fusion or temporal")
        bad = {k: (got[k], expected[k]) for k in expected if got[k] != expected[k]}
        if bad:
            for k, (g, e) in bad.items():
                print(f"MISMATCH {k}: got {g}, expected {e}")
            return EXIT_ASSERT
        print("totals match published counts")
    return EXIT_OK


def _adam(cfg):
    return AdamConfig(learning_rate=cfg.learning_rate, batch_size=cfg.batch_size)


def _maps_for_manifest(cfg, manifest):
    bb = _backbone(cfg)
    items = []
    for (subject, period_tag, _video), rows in sorted(manifest.by_video().items()):
        name = _video_name(subject, period_tag)
        face, body = _load_crops(cfg, name)
        label = _video_label(rows)
        items.append(VideoItem(
            subject_id=subject, period_tag=period_tag,
            face_maps=bb.forward_batch(face),
            body_maps=bb.forward_batch(body),
            frame_labels=np.full(face.shape[0], label, dtype=np.intp),
            video_label=label))
    return items


def cmd_train(cfg, sources, args):
    ck_dir = os.path.join(cfg.work_dir, "checkpoints")
    if args.stage == "fusion":
        items = _maps_for_manifest(cfg, _manifest(cfg))
        face = np.concatenate([it.face_maps for it in items])
        body = np.concatenate([it.body_maps for it in items])
        labels = np.concatenate([it.frame_labels for it in items])
        head, history = train_fusion_head(
            face, body, labels, config=_adam(cfg), epochs=cfg.fusion_epochs,
            seed=cfg.seed, class_weight="balanced")
        save_checkpoint(os.path.join(ck_dir, "fusion"), head.params,
                        pretrain_tag=f"fusion_head_c{head.in_channels}")
    else:
        feat_dir = os.path.join(cfg.work_dir, "features")
        if not os.path.isdir(feat_dir):
            raise PipelineError("no feature caches; run extract first")
        from .temporal import read_feature_cache
        seqs, labels = [], []
        for entry in sorted(os.listdir(feat_dir)):
            if not entry.endswith(".hdr"):
                continue
            feats, _subject, _period, label = read_feature_cache(
                os.path.join(feat_dir, entry[:-4]))
            if args.mode == "frame":
                for win in make_windows(feats, np.full(feats.shape[0],
                                                       int(label), dtype=np.intp),
                                        length=cfg.window_length,
                                        stride=cfg.window_stride):
                    seqs.append(win.features)
                    labels.append(win.label)
            else:
                seqs.append(feats)
                labels.append(int(label))
        spec = TemporalSpec(output_dim=cfg.output_dim)
        model, history = train_temporal(
            seqs, labels, config=_adam(cfg), epochs=cfg.temporal_epochs,
            seed=cfg.seed, spec=spec, class_weight="balanced")
        save_checkpoint(os.path.join(ck_dir, "temporal"), model.params,
                        pretrain_tag=f"temporal_out{cfg.output_dim}")
    last = history[-1] if history else {"loss": float("nan"), "accuracy": 0.0}
    print(f"{args.stage} stage trained: loss {last['loss']:.4f} "
          f"accuracy {last['accuracy']:.4f}")
    print(cfgmod.resolved_text(cfg, sources))
    return EXIT_OK


def _load_head(cfg):
    arrays, _means, tag = load_checkpoint(
        os.path.join(cfg.work_dir, "checkpoints", "fusion"))
    params = {k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()}
    in_channels = params["face_w"].shape[0]
    head = FusionHead(in_channels=in_channels, params=params)
    return head


def _load_temporal(cfg):
    arrays, _means, tag = load_checkpoint(
        os.path.join(cfg.work_dir, "checkpoints", "temporal"))
    params = {k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()}
    spec = TemporalSpec(input_size=params["lstm1_wx"].shape[0],
                        output_dim=params["out_w"].shape[1])
    return TemporalModel(spec, params=params)


def cmd_extract(cfg, sources, args):
    manifest = _manifest(cfg)
    head = _load_head(cfg)
    bb = _backbone(cfg)
    feat_dir = os.path.join(cfg.work_dir, "features")
    os.makedirs(feat_dir, exist_ok=True)
    from .temporal import write_feature_cache
    count = 0
    for (subject, period_tag, _video), rows in sorted(manifest.by_video().items()):
        name = _video_name(subject, period_tag)
        face, body = _load_crops(cfg, name)
        fused = head.features(bb.forward_batch(face), bb.forward_batch(body))
        write_feature_cache(os.path.join(feat_dir, name), fused,
                            subject, period_tag, _video_label(rows))
        count += 1
    print(f"wrote {count} feature caches to {feat_dir}")
    return EXIT_OK


def cmd_eval_loso(cfg, sources, args):
    items = _maps_for_manifest(cfg, _manifest(cfg))
    mode = VIDEO_LEVEL if args.mode == "video" else FRAME_LEVEL
    report = run_loso(
        items, mode=mode, fusion_config=_adam(cfg), temporal_config=_adam(cfg),
        fusion_epochs=cfg.fusion_epochs, temporal_epochs=cfg.temporal_epochs,
        window_length=cfg.window_length, window_stride=cfg.window_stride,
        output_dim=cfg.output_dim, seed=cfg.seed)
    report.config_text = cfgmod.resolved_text(cfg, sources)
    rep_dir = os.path.join(cfg.work_dir, "reports")
    table = report.format_table()
    _write_text(os.path.join(rep_dir, f"loso_{args.mode}.csv"),
                report.to_csv_text())
    _write_text(os.path.join(rep_dir, f"loso_{args.mode}.txt"),
                table + "\n\n" + report.config_text + "\n")
    print(table)
    return EXIT_OK


def cmd_predict(cfg, sources, args):
    head = _load_head(cfg)
    tmodel = _load_temporal(cfg)
    bb = _backbone(cfg)
    face, body = _load_crops(cfg, args.video)
    fused = head.features(bb.forward_batch(face), bb.forward_batch(body))
    if args.mode == "video":
        label, conf = predict_video_level(fused, tmodel)
        print(f"{args.video} video {label} confidence {conf:.4f}")
    else:
        for p in predict_frame_level(fused, tmodel,
                                     window_length=cfg.window_length,
                                     stride=cfg.window_stride):
            if p.warmup:
                print(f"{args.video} frame {p.frame_index} warmup")
            else:
                print(f"{args.video} frame {p.frame_index} {p.label} "
                      f"confidence {p.confidence:.4f}")
    return EXIT_OK


def cmd_score_nips(args):
    a = NipsAssessment(args.face, args.body, args.vital, args.cry,
                       rater_id="cli")
    total, category = score_nips(a)
    label = to_binary_label(total)
    print(f"total {total} category {category} "
          f"label {'pain' if label.is_pain else 'no_pain'}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    warnings.filterwarnings("ignore", message=".*single class.*")
    try:
        if args.command == "score-nips":
            return cmd_score_nips(args)
        cfg, sources = _resolve(args)
        handler = {
            "synth": cmd_synth,
            "prepare": cmd_prepare,
            "summary": cmd_summary,
            "train": cmd_train,
            "extract": cmd_extract,
            "eval-loso": cmd_eval_loso,
            "predict": cmd_predict,
        }[args.command]
        return handler(cfg, sources, args)
    except BadConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
