from typing import Iterator, Tuple
import argparse

from src.Config.Config import Config

COMMANDS = ("verify", "solve", "gen-data", "train", "eval", "pipeline", "export")
STAGES = ("data", "rep", "high", "low", "eval")


def _config_knobs(config: dict, prefix: str = "") -> Iterator[Tuple[str, object]]:
    for key, value in config.items():
        if isinstance(value, dict):
            yield from _config_knobs(value, f"{prefix}{key}.")
        else:
            yield f"{prefix}{key}", value


def _flag(dotted_key: str) -> str:
    return "--" + dotted_key.replace(".", "-").replace("_", "-")


def add_config_flags(parser: argparse.ArgumentParser):
    """
    One kebab-case flag per config knob ("training.batch_size" -> --training-batch-size).
    Flags default to None so only the ones given on the command line override the config file.
    """
    group = parser.add_argument_group("config overrides")
    for key, default in _config_knobs(Config.default()):
        if isinstance(default, bool):
            group.add_argument(_flag(key), dest=key, action=argparse.BooleanOptionalAction, default=None)
        elif isinstance(default, (list, tuple)):
            item_type = type(default[0]) if default else float
            group.add_argument(_flag(key), dest=key, type=item_type, nargs="+", default=None, metavar="N")
        else:
            group.add_argument(_flag(key), dest=key, type=type(default), default=None,
                               help=f"default: {default}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="run.py",
        description="Switching successor measures: exact identities, FB representation learning and "
                    "hierarchical subgoal policies on discrete mazes.",
    )
    parser.add_argument("--log-level", default="info", choices=["debug", "info", "warning", "error", "critical"])
    subparsers = parser.add_subparsers(dest="command", required=True)

    verify = subparsers.add_parser("verify", help="Differential check of the switching identities on random MDPs.")
    verify.add_argument("--n-mdps", type=int, default=100)
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--workers", type=int, default=1)
    verify.add_argument("--corrupt-formula", action="store_true", help="Perturb the closed form (fault injection).")
    verify.add_argument("--report", default=None, help="Write the JSON report here as well as to stdout.")

    for name, help_text in [
        ("solve", "Exact reward, optimal value, switching advantage and pre-hit heatmaps per task."),
        ("gen-data", "Generate the offline dataset."),
        ("train", "Train the representation and both policies on the dataset."),
        ("eval", "Evaluate trained agents on every task."),
        ("pipeline", "gen-data, train and eval in one go."),
        ("export", "Learned reward projection, value, advantage and pre-hit heatmaps per task."),
    ]:
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", default=None, help="YAML/JSON run config; defaults apply to missing keys.")
        add_config_flags(sub)
        if name in ("train", "eval", "pipeline"):
            sub.add_argument("--no-hierarchy", action="store_true", help="Skip the high-level policy.")
        if name in ("eval", "pipeline"):
            sub.add_argument("--parallel-eval", action="store_true", default=None,
                             help="Fan episodes out over evaluation.workers threads.")
        if name == "pipeline":
            sub.add_argument("--stage", choices=STAGES, default=None, help="Stop after this stage.")
        if name == "train":
            sub.add_argument("--stage", choices=STAGES[1:4], default=None, help="Train only this stage.")
        if name in ("train", "pipeline"):
            sub.add_argument("--progress", action="store_true", help="Show progress bars.")
    return parser


def config_from_args(args: argparse.Namespace) -> Config:
    """
    Defaults, then the config file, then command-line overrides.
    """
    config = Config.from_file(args.config) if args.config else Config.default()
    for key, _ in _config_knobs(Config.default()):
        value = getattr(args, key, None)
        if value is not None:
            config.set_value(key, value)
    if getattr(args, "parallel_eval", None):
        config.set_value("evaluation.parallel_eval", True)
    return config
