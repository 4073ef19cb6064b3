"""JSON configuration: defaults, schema validation and object builders."""
import copy
import json
from importlib import resources
from pathlib import Path

import jsonschema

from . import data, dynamics, network, signals, training
from .errors import ConfigError

LITERAL_GAUSSIAN = {"gaussian_sigma": 10.0, "gaussian_half_width": 6}


def _num(minimum=None, exclusive=None, nullable=False):
    s = {"type": ["number", "null"] if nullable else "number"}
    if minimum is not None:
        s["minimum"] = minimum
    if exclusive is not None:
        s["exclusiveMinimum"] = exclusive
    return s


def _int(minimum=None, nullable=False):
    s = {"type": ["integer", "null"] if nullable else "integer"}
    if minimum is not None:
        s["minimum"] = minimum
    return s


def _obj(props, required=()):
    return {"type": "object", "properties": props, "additionalProperties": False,
            "required": list(required)}


_POS = _num(exclusive=0)
_SEGMENT = _obj({"mass": _POS, "length": _POS, "com_ratio": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                 "inertia_com": _num(minimum=0)}, ("mass", "length", "com_ratio"))
_REG = _obj({"intercept": {"type": "number"},
             "terms": {"type": "object", "propertyNames": {"enum": list(dynamics.PREDICTORS)},
                       "additionalProperties": {"type": "number"}}})
_PAIR = {"upper_arm": _POS, "forearm": _POS}

SCHEMA = _obj({
    "model": _obj({
        "anthropometrics": _obj({
            "height": _POS, "weight": _POS,
            "segment_lengths": _obj(_PAIR, ("upper_arm", "forearm")),
            "circumferences": _obj({k: _POS for k in ("arm", "biceps", "forearm", "wrist")}),
        }),
        "regression": _obj({
            "mass_fraction": _obj(_PAIR, ("upper_arm", "forearm")),
            "com_ratio": _obj({k: {"type": "number", "exclusiveMinimum": 0, "maximum": 1}
                               for k in ("upper_arm", "forearm")}, ("upper_arm", "forearm")),
            "inertia": _obj({"upper_arm": _REG, "forearm": _REG}, ("upper_arm", "forearm")),
        }),
        "segments": {"oneOf": [{"type": "null"},
                               _obj({"upper_arm": _SEGMENT, "forearm": _SEGMENT}, ("upper_arm", "forearm"))]},
        "gravity": _num(minimum=0),
    }),
    "signals": _obj({
        "bandpass_hz": {"type": "array", "items": _POS, "minItems": 2, "maxItems": 2},
        "lowpass_hz": _POS,
        "filter_order": _int(1),
        "zero_phase": {"type": "boolean"},
        "gaussian_preset": {"enum": ["default", "literal"]},
        "gaussian_sigma": _POS,
        "gaussian_half_width": _int(1, nullable=True),
    }),
    "network": _obj({"hidden_layers": _int(1), "hidden_width": _int(1)}),
    "training": _obj({
        "batch_size": _int(1),
        "epochs_per_load": _int(1),
        "lr0": _POS,
        "lr_step": _int(1),
        "lr_gamma": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "alpha": {"oneOf": [{"const": "auto"}, _num(minimum=0)]},
        "seed": _int(0),
        "load_order": {"type": "array", "items": _num(minimum=0), "minItems": 1},
        "adam": _obj({"beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                      "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                      "eps": _POS}),
        "jet": {"enum": ["exact", "stencil"]},
        "jet_h": _POS,
        "torque_scale": _num(exclusive=0, nullable=True),
    }),
    "data": _obj({
        "path": {"type": ["string", "null"]},
        "split": _obj({"train_runs": _int(1), "val_runs": _int(0), "test_runs": _int(0)}),
        "split_seed": _int(0),
        "synth": _obj({
            "loads": {"type": "array", "items": _num(minimum=0), "minItems": 1},
            "runs_per_load": _int(1),
            "trials_per_run": _int(1),
            "seed": _int(0),
            "trajectory": _obj({
                "rate": _POS, "reps": _int(1), "rest": _num(minimum=0),
                "flex_duration": _POS, "extend_duration": _POS,
                "elbow_offset": _num(minimum=0), "elbow_amplitude": _num(minimum=0),
                "shoulder_offset": {"type": "number"}, "shoulder_amplitude": {"type": "number"},
                "shoulder_lead": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "jitter": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            }),
            "emg": _obj({
                "noise_std": _num(minimum=0), "activation_gain": _POS,
                "channel_gains": {"type": "array", "items": _num(minimum=0), "minItems": 4, "maxItems": 4},
                "lowpass_hz": _POS,
                "torque_ref": _num(exclusive=0, nullable=True),
            }),
        }),
    }),
    "eval": _obj({"out_dir": {"type": "string"}}),
})


def default_config():
    text = resources.files("emgpinn").joinpath("default_config.json").read_text()
    return json.loads(text)


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(cfg):
    """Raise ``ConfigError`` naming the offending path if ``cfg`` breaks the schema."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(e.message, path)
    return cfg


def resolve(user=None, overrides=None):
    """Defaults, then the user's config, then flag overrides; validated."""
    cfg = default_config()
    if user:
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    return validate(cfg)


def load(path=None, overrides=None):
    user = None
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError("config file not found", str(path)) from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e}", str(path)) from None
        if not isinstance(user, dict):
            raise ConfigError("top level must be an object", str(path))
    return resolve(user, overrides)


# --- builders --------------------------------------------------------------

def build_model(cfg):
    m = cfg["model"]
    if m.get("segments"):
        s = m["segments"]
        ua = dynamics.SegmentParams(**s["upper_arm"])
        fa = dynamics.SegmentParams(**s["forearm"])
    else:
        ua, fa = dynamics.estimate_segment_params(m["anthropometrics"], m["regression"])
    return dynamics.LimbModel(ua, fa, hand_load=0.0, gravity=m["gravity"])


def gaussian_params(cfg):
    s = cfg["signals"]
    if s["gaussian_preset"] == "literal":
        return LITERAL_GAUSSIAN["gaussian_sigma"], LITERAL_GAUSSIAN["gaussian_half_width"]
    return s["gaussian_sigma"], s["gaussian_half_width"]


def build_filters(cfg):
    s = cfg["signals"]
    return (signals.FilterSpec("bandpass", tuple(s["bandpass_hz"]), s["filter_order"]),
            signals.FilterSpec("lowpass", (s["lowpass_hz"],), s["filter_order"]))


def build_architecture(cfg):
    n = cfg["network"]
    return network.Architecture(hidden_layers=n["hidden_layers"], hidden_width=n["hidden_width"])


def build_train_config(cfg):
    t = cfg["training"]
    return training.TrainConfig(
        batch_size=t["batch_size"], epochs_per_load=t["epochs_per_load"], lr0=t["lr0"],
        lr_step=t["lr_step"], lr_gamma=t["lr_gamma"], alpha=t["alpha"], seed=t["seed"],
        load_order=tuple(float(x) for x in t["load_order"]),
        beta1=t["adam"]["beta1"], beta2=t["adam"]["beta2"], eps=t["adam"]["eps"],
        jet=t["jet"], jet_h=t["jet_h"], torque_scale=t["torque_scale"])


def build_split(cfg):
    return data.SplitSpec(**cfg["data"]["split"])


def build_synth_config(cfg):
    s = cfg["data"]["synth"]
    traj = data.TrajectoryConfig(**s["trajectory"])
    emg = dict(s["emg"])
    emg["channel_gains"] = tuple(emg["channel_gains"])
    return data.SynthDatasetConfig(
        loads=tuple(float(x) for x in s["loads"]), runs_per_load=s["runs_per_load"],
        trials_per_run=s["trials_per_run"], seed=s["seed"],
        trajectory=traj, emg=data.EmgSynthConfig(**emg))


def with_seed(cfg, seed):
    """Apply a global ``--seed`` to training, splitting and synthesis."""
    out = copy.deepcopy(cfg)
    out["training"]["seed"] = seed
    out["data"]["split_seed"] = seed
    out["data"]["synth"]["seed"] = seed
    return out


__all__ = ["SCHEMA", "default_config", "validate", "resolve", "load", "build_model",
           "build_filters", "build_architecture", "build_train_config", "build_split",
           "build_synth_config", "gaussian_params", "with_seed"]
