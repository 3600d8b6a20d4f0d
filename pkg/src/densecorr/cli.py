"""Command-line interface: ``densecorr <subcommand> ...``.

Exit status is 0 on success, 2 on usage errors and 1 on runtime failures
(with a one-line diagnostic on stderr).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import gradcheck
from .correspondences import CorrespondenceSet, read_correspondences, write_correspondences
from .evaluation import pck, pck_alpha, pck_curve
from .exceptions import DenseCorrError
from .geometry import (
    CalibratedPair,
    estimate_pose,
    rotation_deviation_deg,
    translation_deviation_deg,
)
from .matching import extract_features, match_keypoints, ratio_test_filter
from .network import FeatureNetwork
from .synth import (
    WARP_KINDS,
    WarpSpec,
    generate_dataset,
    generate_two_view_scene,
    load_bundle,
    save_bundle,
)
from .trainer import TrainConfig, train


def _on_off(value):
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _warp_spec(args, seed):
    return WarpSpec(
        kind=args.kind, image_shape=tuple(args.size), max_translation=args.translation,
        max_rotation_deg=args.rotation, noise_sigma=args.noise, gain_range=tuple(args.gain),
        max_offset=args.offset, n_correspondences=args.n_correspondences, seed=seed,
    )


def _add_warp_flags(p):
    p.add_argument("--kind", choices=WARP_KINDS, default="affine")
    p.add_argument("--size", type=int, nargs=2, default=[48, 48], metavar=("H", "W"))
    p.add_argument("--translation", type=float, default=6.0, help="max shift in px")
    p.add_argument("--rotation", type=float, default=30.0, help="max rotation in degrees")
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--gain", type=float, nargs=2, default=[0.5, 1.5], metavar=("LO", "HI"))
    p.add_argument("--offset", type=float, default=0.3)
    p.add_argument("--n-correspondences", type=int, default=1000)


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_synth(args):
    os.makedirs(args.out, exist_ok=True)
    if args.scene:
        scene = generate_two_view_scene(args.points, seed=args.seed, noise_px=args.pixel_noise)
        n = len(scene.px1)
        pairs = CorrespondenceSet(scene.px1[:, 0], scene.px1[:, 1], scene.px2[:, 0], scene.px2[:, 1],
                                  np.ones(n, dtype=np.int64))
        write_correspondences(os.path.join(args.out, "matches.txt"), pairs)
        _write_json(os.path.join(args.out, "intrinsics.json"), {"K": scene.K.tolist()})
        _write_json(os.path.join(args.out, "gt_pose.json"),
                    {"R": scene.R.reshape(-1).tolist(), "t": scene.t.tolist()})
        return 0
    for i, pair in enumerate(generate_dataset(args.n_pairs, _warp_spec(args, args.seed))):
        save_bundle(os.path.join(args.out, f"pair_{i:04d}"), pair)
    return 0


def _load_pairs(data_dir):
    dirs = sorted(
        os.path.join(data_dir, d) for d in os.listdir(data_dir)
        if os.path.isfile(os.path.join(data_dir, d, "pairs.txt"))
    )
    if not dirs:
        raise DenseCorrError(f"no pair bundles found under {data_dir}")
    return [load_bundle(d) for d in dirs]


def cmd_train(args):
    if args.data:
        dataset = _load_pairs(args.data)
    else:
        dataset = generate_dataset(args.n_pairs, _warp_spec(args, args.seed))
    cfg = TrainConfig(
        lr=args.lr, momentum=args.momentum, steps=args.steps, batch_size=args.batch_size,
        margin=args.margin, negatives=args.negatives, spatial_transformer=args.st,
        seed=args.seed, mining_radius=args.radius, n_correspondences=args.corr_per_step,
    )
    net = FeatureNetwork(spatial_transformer=args.st, seed=args.seed)
    result = train(net, dataset, cfg)
    net.save(args.ckpt)
    if args.trace:
        result.write_trace(args.trace)
    losses = result.losses
    print(json.dumps({"steps": len(losses), "first_loss": float(losses[0]), "last_loss": float(losses[-1])}))
    return 0


def cmd_match(args):
    net = FeatureNetwork.load(args.ckpt)
    pair = load_bundle(args.pair)
    if args.keypoints:
        keypoints = read_correspondences(args.keypoints).pts1
    else:
        keypoints = pair.pairs.subset(pair.pairs.s == 1).pts1
    query = extract_features(net, pair.img1)
    ref = extract_features(net, pair.img2)
    result = match_keypoints(query, ref, keypoints)
    if args.ratio_test is not None:
        result = ratio_test_filter(result, args.ratio_test)
    write_correspondences(args.out, result.to_correspondences(), extra_columns=("d1", "d2"))
    return 0


def cmd_eval_pck(args):
    pred = read_correspondences(args.pred)
    gt = read_correspondences(args.gt)
    if len(gt) != len(pred):
        # predictions may be a filtered subset: align on the query point
        index = {(x, y): i for i, (x, y) in enumerate(zip(gt.x, gt.y))}
        try:
            rows = [index[(x, y)] for x, y in zip(pred.x, pred.y)]
        except KeyError:
            raise DenseCorrError("prediction query points do not match ground truth") from None
        gt = gt.subset(np.array(rows, dtype=np.intp))
    summary = {f"pck@{t:g}": pck(pred.pts2, gt.pts2, t) for t in args.T}
    if args.alpha is not None:
        if args.image_size is None:
            raise DenseCorrError("--alpha needs --image-size H W")
        norm = {"maxdim": "max_dim", "diag": "diagonal"}[args.norm]
        summary[f"pck_alpha@{args.alpha:g}"] = pck_alpha(pred.pts2, gt.pts2, args.alpha,
                                                       tuple(args.image_size), norm)
    if args.curve:
        pck_curve(pred.pts2, gt.pts2).to_csv(args.curve)
    text = json.dumps(summary, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def cmd_pose(args):
    matches = read_correspondences(args.matches)
    if args.ratio_test is not None and "d1" in matches.extra:
        d1, d2 = matches.extra["d1"], matches.extra["d2"]
        matches = matches.subset(np.where(d2 == 0, d1 == 0, d1 < args.ratio_test * d2))
    K = np.asarray(_read_json(args.intrinsics)["K"], dtype=np.float64).reshape(3, 3)
    pairs = CalibratedPair.from_pixels(matches.pts1, matches.pts2, K)
    pose = estimate_pose(pairs, args.threshold, args.iters, args.seed)
    report = pose.to_dict()
    if args.gt_pose:
        gt = _read_json(args.gt_pose)
        report["rotation_deviation_deg"] = rotation_deviation_deg(pose.R, np.reshape(gt["R"], (3, 3)))
        report["translation_deviation_deg"] = translation_deviation_deg(pose.t, gt["t"])
    text = json.dumps(report, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def cmd_grad_check(args):
    results = gradcheck.run_suite(range(args.seeds))
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name:28s} max_rel_err={r.max_error:.3e} worst_seed={r.worst_seed} "
              f"({r.seconds:.1f}s)")
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="densecorr", description="Dense learned correspondence tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate pair bundles or a two-view scene")
    _add_warp_flags(p)
    p.add_argument("--n-pairs", type=int, default=1)
    p.add_argument("--scene", action="store_true", help="emit a calibrated two-view scene instead")
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--pixel-noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a network variant")
    _add_warp_flags(p)
    p.add_argument("--data", help="directory of pair bundles (default: generate synthetic pairs)")
    p.add_argument("--n-pairs", type=int, default=50)
    p.add_argument("--negatives", choices=("random", "hard"), default="hard")
    p.add_argument("--st", type=_on_off, default=False, metavar="on|off")
    p.add_argument("--steps", type=int, default=800)
    p.add_argument("--lr", type=float, default=0.03)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--radius", type=float, default=16.0, help="hard-negative radius in px")
    p.add_argument("--corr-per-step", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--trace", help="loss trace CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("match", help="extract features and nearest-neighbour match")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--pair", required=True, help="pair bundle directory")
    p.add_argument("--keypoints", help="correspondence file whose x y columns are the queries")
    p.add_argument("--ratio-test", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval-pck", help="PCK summary and curve")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--T", type=float, nargs="+", default=[5.0, 10.0])
    p.add_argument("--alpha", type=float)
    p.add_argument("--norm", choices=("maxdim", "diag"), default="maxdim")
    p.add_argument("--image-size", type=int, nargs=2, metavar=("H", "W"))
    p.add_argument("--curve", help="CSV output for the 1-100 px curve")
    p.add_argument("--out", help="summary JSON output")
    p.set_defaults(func=cmd_eval_pck)

    p = sub.add_parser("pose", help="essential matrix, decomposition and deviation report")
    p.add_argument("--matches", required=True, help="pixel correspondences")
    p.add_argument("--intrinsics", required=True, help='JSON {"K": 3x3}')
    p.add_argument("--gt-pose", help='JSON {"R": 9 floats, "t": 3 floats}')
    p.add_argument("--ratio-test", type=float)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="pose report JSON")
    p.set_defaults(func=cmd_pose)

    p = sub.add_parser("grad-check", help="finite-difference gradient suite")
    p.add_argument("--seeds", type=int, default=100)
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DenseCorrError, OSError, ValueError, KeyError) as exc:
        print(f"densecorr {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
