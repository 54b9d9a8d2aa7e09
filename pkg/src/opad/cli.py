"""Command-line driver: synth | calibrate | train | attack | campaign | analyze.

Configuration is a flat ``key = value`` text file with dotted section
prefixes (``scene.width = 64``).  Flags: ``--config PATH``, ``--seed N``,
``--out DIR``, and repeatable ``--override key=value``.  Every command
re-emits its fully resolved configuration next to its outputs, and all
randomness flows from named seed keys, so re-runs are byte-identical.

Exit codes: 0 success, 1 usage/config error, 2 pipeline failure.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import attack as attack_mod
from . import calibration, classifiers, geometry, imagecore, optics

DEFAULT_BASE_LEVEL = 140.0 / 255.0


class UsageError(Exception):
    """Bad flags, malformed config, unknown or missing keys."""


REQUIRED = object()


def _bool(text: str) -> bool:
    if text.lower() in ("true", "1", "yes", "on"):
        return True
    if text.lower() in ("false", "0", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _int_list(text):
    return [int(t) for t in text.split(",") if t.strip() != ""]


def _float_list(text):
    return [float(t) for t in text.split(",") if t.strip() != ""]


def _str_list(text):
    return [t.strip() for t in text.split(",") if t.strip() != ""]


_SCENE_KEYS = {
    "scene.width": (int, 64),
    "scene.height": (int, 64),
    "scene.material": (str, "matte"),
    "scene.gamma_lo": (float, 1.8),
    "scene.gamma_hi": (float, 2.4),
    "scene.mix_diag": (float, 0.7),
    "scene.offset_scale": (float, 0.05),
    "scene.smoothness": (float, 8.0),
    "scene.seed": (int, 0),
}

_DATA_KEYS = {
    "data.width": (int, 32),
    "data.height": (int, 32),
    "data.classes": (int, 8),
    "data.per_class": (int, 24),
    "data.seed": (int, 0),
}

_TRAIN_KEYS = {
    "train.arch": (str, "mlp"),
    "train.hidden": (int, 64),
    "train.epochs": (int, 40),
    "train.lr": (float, 0.05),
    "train.batch": (int, 32),
    "train.seed": (int, 0),
    "train.offset_jitter": (float, 0.0),
}

_ATTACK_KEYS = {
    "attack.backbone": (str, "pgd"),
    "attack.norm": (str, "linf"),
    "attack.alpha": (float, None),      # None -> per-norm default
    "attack.step": (float, None),
    "attack.iterations": (int, 20),
    "attack.block": (int, 8),
    "attack.compensated": (_bool, True),
    "attack.seed": (int, 0),
}

SCHEMAS = {
    "synth": {"out": (str, REQUIRED), "f0": (float, DEFAULT_BASE_LEVEL),
              **_SCENE_KEYS},
    "calibrate": {
        "out": (str, REQUIRED),
        "scene.dir": (str, ""),
        "captures.dir": (str, ""),
        "level_lo": (float, calibration.LEVEL_LO),
        "level_hi": (float, calibration.LEVEL_HI),
        "noise.sigma": (float, 0.0),
        "noise.quantize": (_bool, False),
        "noise.seed": (int, 0),
        "fidelity.patterns": (int, 50),
        "fidelity.seed": (int, 7),
    },
    "train": {"out": (str, REQUIRED), **_DATA_KEYS, **_TRAIN_KEYS},
    "attack": {
        "out": (str, REQUIRED),
        "model.dir": (str, ""),
        "scene.dir": (str, REQUIRED),
        "classifier.dir": (str, REQUIRED),
        "f0": (float, DEFAULT_BASE_LEVEL),
        "mode": (str, "targeted"),
        "label": (int, REQUIRED),
        **_ATTACK_KEYS,
    },
    "campaign": {
        "out": (str, REQUIRED),
        "f0": (float, DEFAULT_BASE_LEVEL),
        "campaign.scene_seeds": (_int_list, [1, 2, 3, 4]),
        "campaign.materials": (_str_list, ["matte"]),
        "campaign.targets": (_int_list, [1, 2, 3, 4]),
        "campaign.norms": (_str_list, ["linf", "l2"]),
        "campaign.classifier_hidden": (_int_list, [64, 96]),
        "campaign.alpha_sweep": (_float_list, [0.1, 0.5, 1.0, 1.5]),
        "campaign.sweep_norm": (str, "l2"),
        "campaign.ablation_norm": (str, "linf"),
        "campaign.ablation_alpha": (float, 0.4),
        "campaign.iterations": (int, 20),
        "campaign.block": (int, 8),
        **{k: v for k, v in _SCENE_KEYS.items() if k != "scene.seed"},
        **_DATA_KEYS,
        **{k: v for k, v in _TRAIN_KEYS.items() if k != "train.arch"},
    },
    "analyze": {
        "out": (str, REQUIRED),
        "scene.dir": (str, REQUIRED),
        "classifier.dir": (str, ""),
        "f0": (float, DEFAULT_BASE_LEVEL),
        "analyze.alpha": (float, 0.05),
        "analyze.trials": (int, 20),
        "analyze.theta_seed": (int, 0),
        "analyze.slack": (float, 0.1),
    },
}

_SEED_KEY = {
    "synth": "scene.seed",
    "calibrate": "noise.seed",
    "train": "train.seed",
    "attack": "attack.seed",
    "campaign": "data.seed",
    "analyze": "analyze.theta_seed",
}


def parse_config_file(path) -> dict:
    raw = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected 'key = value'")
                key, _, value = line.partition("=")
                raw[key.strip()] = value.strip()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    return raw


def resolve_config(command: str, raw: dict) -> dict:
    schema = SCHEMAS[command]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
    cfg = {}
    for key, (parse, default) in schema.items():
        if key in raw:
            try:
                cfg[key] = parse(raw[key])
            except UsageError:
                raise
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for {key}: {raw[key]!r}") from exc
        elif default is REQUIRED:
            raise UsageError(f"missing required config key: {key}")
        else:
            cfg[key] = default
    return cfg


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def emit_effective_config(cfg: dict, path) -> None:
    with open(path, "w") as fh:
        for key in sorted(cfg):
            if cfg[key] is None:
                continue
            fh.write(f"{key} = {_format_value(cfg[key])}\n")


def _scene_spec(cfg: dict, seed=None) -> optics.SceneSpec:
    return optics.SceneSpec(
        width=cfg["scene.width"], height=cfg["scene.height"],
        material=cfg["scene.material"],
        gamma_range=(cfg["scene.gamma_lo"], cfg["scene.gamma_hi"]),
        mix_diag=cfg["scene.mix_diag"], offset_scale=cfg["scene.offset_scale"],
        smoothness=cfg["scene.smoothness"],
        seed=cfg["scene.seed"] if seed is None else seed)


def _attack_config(cfg: dict, prefix: str = "attack.") -> attack_mod.AttackConfig:
    norm = cfg[prefix + "norm"]
    overrides = dict(
        backbone=cfg[prefix + "backbone"], iterations=cfg[prefix + "iterations"],
        block=cfg[prefix + "block"], compensated=cfg[prefix + "compensated"],
        seed=cfg[prefix + "seed"])
    if cfg[prefix + "alpha"] is not None:
        overrides["alpha"] = cfg[prefix + "alpha"]
    if cfg[prefix + "step"] is not None:
        overrides["step_size"] = cfg[prefix + "step"]
    return attack_mod.AttackConfig.defaults(norm, **overrides)


def cmd_synth(cfg: dict) -> int:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    model = optics.synth_scene(_scene_spec(cfg))
    optics.save_channel_model(model, os.path.join(out, "scene"))
    base = imagecore.uniform(model.height, model.width, cfg["f0"])
    imagecore.save_png(optics.capture(model, base),
                       os.path.join(out, "preview.png"))
    emit_effective_config(cfg, os.path.join(out, "effective_config.txt"))
    print(f"scene written to {os.path.join(out, 'scene')}")
    return 0


def _load_capture_set(dirpath) -> calibration.CalibrationCaptureSet:
    names = ("gray_lo", "red_hi", "green_hi", "blue_hi", "gray_hi", "sweep")
    frames = []
    for name in names:
        path = os.path.join(dirpath, f"{name}.opt1")
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing capture file: {path}")
        frames.append(imagecore.load_tensor(path))
    return calibration.CalibrationCaptureSet(*frames)


def cmd_calibrate(cfg: dict) -> int:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    scene = None
    if cfg["scene.dir"]:
        scene = optics.load_channel_model(cfg["scene.dir"])
        patterns = calibration.make_patterns(
            scene.width, scene.height, cfg["level_lo"], cfg["level_hi"])
        noise = optics.NoiseSpec(cfg["noise.sigma"], cfg["noise.quantize"],
                                 cfg["noise.seed"])
        captures = calibration.simulate_captures(scene, patterns, noise)
    elif cfg["captures.dir"]:
        captures = _load_capture_set(cfg["captures.dir"])
        h, w = captures.gray_lo.shape[:2]
        patterns = calibration.make_patterns(w, h, cfg["level_lo"],
                                             cfg["level_hi"])
    else:
        raise UsageError("calibrate needs scene.dir or captures.dir")

    model = calibration.calibrate(captures, patterns)
    calibration.save_estimated_model(model, os.path.join(out, "model"))

    if scene is not None:
        rng = np.random.default_rng(cfg["fidelity.seed"])
        lo, hi = model.regime
        rows = []
        for i in range(cfg["fidelity.patterns"]):
            illum = rng.uniform(lo, hi, (scene.height, scene.width, 3))
            fwd_err = imagecore.dist(model.forward(illum),
                                     optics.forward(scene, illum), "linf")
            recovered = model.invert(optics.capture(scene, illum))
            inv_err = imagecore.dist(np.clip(recovered, 0.0, 1.0), illum, "linf")
            rows.append((i, fwd_err, inv_err))
        with open(os.path.join(out, "fidelity.csv"), "w", newline="") as fh:
            fh.write("# calibrate-fidelity v1\n")
            writer = csv.writer(fh)
            writer.writerow(["pattern", "forward_err_linf", "inverse_err_linf"])
            for i, fe, ie in rows:
                writer.writerow([i, f"{fe:.9g}", f"{ie:.9g}"])
    emit_effective_config(cfg, os.path.join(out, "effective_config.txt"))
    print(f"estimated model written to {os.path.join(out, 'model')} "
          f"(regime [{model.regime[0]:.4f}, {model.regime[1]:.4f}])")
    return 0


def cmd_train(cfg: dict) -> int:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    dataset = classifiers.synth_dataset(
        cfg["data.width"], cfg["data.height"], cfg["data.classes"],
        cfg["data.per_class"], cfg["data.seed"])
    arch = "linear" if cfg["train.arch"] == "linear" else (cfg["train.hidden"],)
    clf = classifiers.train(dataset, arch, cfg["train.epochs"], cfg["train.lr"],
                            seed=cfg["train.seed"], batch_size=cfg["train.batch"],
                            offset_jitter=cfg["train.offset_jitter"])
    classifiers.save_classifier(clf, os.path.join(out, "classifier"))
    emit_effective_config(cfg, os.path.join(out, "effective_config.txt"))
    print(f"train accuracy {clf.train_accuracy:.4f}; classifier written to "
          f"{os.path.join(out, 'classifier')}")
    return 0


def cmd_attack(cfg: dict) -> int:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    scene = optics.load_channel_model(cfg["scene.dir"])
    clf = classifiers.load_classifier(cfg["classifier.dir"])
    spec = classifiers.LossSpec(cfg["mode"], cfg["label"])
    acfg = _attack_config(cfg)
    base = imagecore.uniform(scene.height, scene.width, cfg["f0"])
    if acfg.compensated:
        if not cfg["model.dir"]:
            raise UsageError("compensated attack needs model.dir")
        model = calibration.load_estimated_model(cfg["model.dir"])
        result = attack_mod.compensated_attack(model, scene, clf, base,
                                               spec, acfg)
    else:
        result = attack_mod.uncompensated_attack(scene, clf, base, spec, acfg)
    attack_mod.save_attack_result(result, out)
    emit_effective_config(cfg, os.path.join(out, "effective_config.txt"))
    print(f"attack {'succeeded' if result.success else 'failed'}: "
          f"predicted {result.predicted} "
          f"(confidence {result.confidence:.3f}, distance {result.distance:.5f})")
    return 0


def cmd_campaign(cfg: dict) -> int:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    base_level = cfg["f0"]

    dataset = classifiers.synth_dataset(
        cfg["data.width"], cfg["data.height"], cfg["data.classes"],
        cfg["data.per_class"], cfg["data.seed"])
    clf_list = []
    for i, hidden in enumerate(cfg["campaign.classifier_hidden"]):
        clf = classifiers.train(dataset, (hidden,), cfg["train.epochs"],
                                cfg["train.lr"], seed=cfg["train.seed"] + i,
                                batch_size=cfg["train.batch"],
                                offset_jitter=cfg["train.offset_jitter"])
        clf_list.append((f"mlp{hidden}", clf))

    scenes = []
    for material in cfg["campaign.materials"]:
        for seed in cfg["campaign.scene_seeds"]:
            spec = optics.SceneSpec(
                width=cfg["data.width"], height=cfg["data.height"],
                material=material,
                gamma_range=(cfg["scene.gamma_lo"], cfg["scene.gamma_hi"]),
                mix_diag=cfg["scene.mix_diag"],
                offset_scale=cfg["scene.offset_scale"],
                smoothness=cfg["scene.smoothness"], seed=seed)
            channel = optics.synth_scene(spec)
            patterns = calibration.make_patterns(spec.width, spec.height)
            captures = calibration.simulate_captures(channel, patterns)
            model = calibration.calibrate(captures, patterns)
            scenes.append((f"{material}{seed}", channel, model))

    def run(channel, model, clf, target, norm, alpha, compensated):
        acfg = attack_mod.AttackConfig.defaults(
            norm, iterations=cfg["campaign.iterations"],
            block=cfg["campaign.block"],
            **({"alpha": alpha, "step_size": alpha} if alpha else {}))
        base = imagecore.uniform(channel.height, channel.width, base_level)
        spec = classifiers.LossSpec("targeted", target)
        if compensated:
            return attack_mod.compensated_attack(model, channel, clf, base,
                                                 spec, acfg)
        return attack_mod.uncompensated_attack(channel, clf, base, spec, acfg)

    grid_rows = []
    for obj, channel, model in scenes:
        for target in cfg["campaign.targets"]:
            for norm in cfg["campaign.norms"]:
                for name, clf in clf_list:
                    res = run(channel, model, clf, target, norm, None, True)
                    alpha = attack_mod.AttackConfig.defaults(norm).alpha
                    grid_rows.append([obj, target, "pgd", norm, alpha, name,
                                      int(res.success), res.confidence,
                                      res.distance])
    _write_campaign_csv(os.path.join(out, "campaign.csv"), grid_rows)
    _write_campaign_summary(os.path.join(out, "campaign_summary.csv"), grid_rows)

    ablation_rows = []
    abl_norm = cfg["campaign.ablation_norm"]
    abl_alpha = cfg["campaign.ablation_alpha"]
    name, clf = clf_list[0]
    for obj, channel, model in scenes:
        for target in cfg["campaign.targets"]:
            comp = run(channel, model, clf, target, abl_norm, abl_alpha, True)
            unc = run(channel, model, clf, target, abl_norm, abl_alpha, False)
            ablation_rows.append([obj, target, abl_norm, abl_alpha,
                                  int(comp.success), int(unc.success)])
    with open(os.path.join(out, "ablation.csv"), "w", newline="") as fh:
        fh.write("# campaign-ablation v1\n")
        writer = csv.writer(fh)
        writer.writerow(["object", "target", "norm", "alpha",
                         "compensated_success", "uncompensated_success"])
        writer.writerows(ablation_rows)

    sweep_rows = []
    for alpha in cfg["campaign.alpha_sweep"]:
        for obj, channel, model in scenes:
            for target in cfg["campaign.targets"]:
                res = run(channel, model, clf_list[0][1], target,
                          cfg["campaign.sweep_norm"], alpha, True)
                sweep_rows.append([f"{alpha:.9g}", obj, target,
                                   int(res.success), res.confidence])
    with open(os.path.join(out, "alpha_sweep.csv"), "w", newline="") as fh:
        fh.write("# campaign-alpha-sweep v1\n")
        writer = csv.writer(fh)
        writer.writerow(["alpha", "object", "target", "success", "confidence"])
        writer.writerows(sweep_rows)

    emit_effective_config(cfg, os.path.join(out, "effective_config.txt"))
    total = sum(r[6] for r in grid_rows)
    print(f"campaign: {total}/{len(grid_rows)} grid attacks succeeded; "
          f"reports in {out}")
    return 0


def _write_campaign_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# campaign-grid v1\n")
        writer = csv.writer(fh)
        writer.writerow(["object", "target", "backbone", "norm", "alpha",
                         "classifier", "success", "confidence", "distance"])
        for row in rows:
            writer.writerow([row[0], row[1], row[2], row[3], f"{row[4]:.9g}",
                             row[5], row[6], f"{row[7]:.9g}", f"{row[8]:.9g}"])


def _write_campaign_summary(path, rows) -> None:
    def tally(index):
        counts = {}
        for row in rows:
            key = row[index]
            succ, tot = counts.get(key, (0, 0))
            counts[key] = (succ + row[6], tot + 1)
        return counts

    with open(path, "w", newline="") as fh:
        fh.write("# campaign-summary v1\n")
        writer = csv.writer(fh)
        writer.writerow(["cell", "value", "successes", "trials"])
        for label, index in (("object", 0), ("target", 1), ("norm", 3),
                             ("classifier", 5)):
            for key in sorted({row[index] for row in rows}, key=str):
                succ, tot = tally(index)[key]
                writer.writerow([label, key, succ, tot])
        writer.writerow(["total", "all", sum(r[6] for r in rows), len(rows)])


def cmd_analyze(cfg: dict) -> int:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    scene = optics.load_channel_model(cfg["scene.dir"])
    base = imagecore.uniform(scene.height, scene.width, cfg["f0"])
    alpha = cfg["analyze.alpha"]
    slack = cfg["analyze.slack"]

    cond = geometry.conditioning_report(scene, base)

    if cfg["classifier.dir"]:
        fixed = classifiers.load_classifier(cfg["classifier.dir"])
        if not isinstance(fixed, classifiers.LinearClassifier):
            raise UsageError("analyze needs a binary linear classifier")
        thetas = [fixed.weights]
    else:
        rng = np.random.default_rng(cfg["analyze.theta_seed"])
        thetas = [rng.uniform(-1.0, 1.0, (scene.height, scene.width, 3))
                  for _ in range(cfg["analyze.trials"])]

    patterns = calibration.make_patterns(scene.width, scene.height)
    model = calibration.calibrate(
        calibration.simulate_captures(scene, patterns), patterns)

    crosstab = {"feasible": [0, 0], "infeasible": [0, 0], "borderline": [0, 0]}
    first_report = None
    for weights in thetas:
        clf = classifiers.LinearClassifier(weights)
        clean = optics.capture(scene, base)
        current, _ = classifiers.predict(clf, clean)
        spec = classifiers.LossSpec("targeted", -current)
        report = geometry.feasibility(clf, scene, base, spec, alpha, "linf")
        if first_report is None:
            first_report = report
        res = attack_mod.compensated_attack(
            model, scene, clf, base, spec,
            attack_mod.AttackConfig.defaults("linf", alpha=alpha,
                                             step_size=alpha, block=1))
        if report.max_margin_gain >= (1.0 + slack) * report.required_gain:
            bucket = "feasible"
        elif report.max_margin_gain <= (1.0 - slack) * report.required_gain:
            bucket = "infeasible"
        else:
            bucket = "borderline"
        crosstab[bucket][0 if res.success else 1] += 1

    with open(os.path.join(out, "feasibility.csv"), "w", newline="") as fh:
        fh.write("# analyze-feasibility v1\n")
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "sv1", "sv2", "sv3", "cond", "gain",
                         "saturated"])
        sv = cond.singular_values
        for row in range(scene.height):
            for col in range(scene.width):
                writer.writerow([
                    col, row,
                    f"{sv[row, col, 0]:.9g}", f"{sv[row, col, 1]:.9g}",
                    f"{sv[row, col, 2]:.9g}",
                    f"{cond.condition[row, col]:.9g}",
                    f"{first_report.pixel_gains[row, col]:.9g}",
                    int(cond.saturated[row, col])])

    with open(os.path.join(out, "crosstab.csv"), "w", newline="") as fh:
        fh.write("# analyze-crosstab v1\n")
        writer = csv.writer(fh)
        writer.writerow(["oracle_verdict", "attack_success", "attack_failure"])
        for bucket in ("feasible", "infeasible", "borderline"):
            writer.writerow([bucket] + crosstab[bucket])

    summary = {
        "alpha": alpha,
        "feasible": bool(first_report.feasible),
        "max_margin_gain": first_report.max_margin_gain,
        "required_gain": first_report.required_gain,
        "alpha_bound_frac": first_report.alpha_bound_frac,
        "omega_bound_frac": first_report.omega_bound_frac,
        "median_condition": float(np.median(cond.condition)),
        "saturated_frac": float(cond.saturated.mean()),
    }
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    emit_effective_config(cfg, os.path.join(out, "effective_config.txt"))
    headline = {k: summary[k] for k in ("feasible", "max_margin_gain",
                                        "required_gain")}
    print(f"analysis written to {out}: {json.dumps(headline)}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "calibrate": cmd_calibrate,
    "train": cmd_train,
    "attack": cmd_attack,
    "campaign": cmd_campaign,
    "analyze": cmd_analyze,
}

_ANALYZE_HELP = ("feasibility.csv columns: x, y, sv1, sv2, sv3 (descending "
                 "singular values of the pixel color map), cond (sv1/sv3), "
                 "gain (per-pixel margin gain), saturated (0/1). "
                 "crosstab.csv columns: oracle_verdict, attack_success, "
                 "attack_failure.")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="opad", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name, epilog=_ANALYZE_HELP if name == "analyze"
                             else None)
        cmd.add_argument("--config", default=None, help="key = value file")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the command's primary seed")
        cmd.add_argument("--out", default=None, help="output directory")
        cmd.add_argument("--override", action="append", default=[],
                         metavar="key=value", help="repeatable config override")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        raw = parse_config_file(args.config) if args.config else {}
        for item in args.override:
            if "=" not in item:
                raise UsageError(f"--override expects key=value, got {item!r}")
            key, _, value = item.partition("=")
            raw[key.strip()] = value.strip()
        if args.out is not None:
            raw["out"] = args.out
        if args.seed is not None:
            raw[_SEED_KEY[args.command]] = str(args.seed)
        cfg = resolve_config(args.command, raw)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pipeline failure: stable exit code for scripts
        print(f"pipeline error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
