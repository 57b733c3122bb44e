from ruamel import yaml
import hashlib
import json
import os

yaml = yaml.YAML()


class ConfigError(ValueError):
    """
    Raised when a config value is missing or out of range.
    """


class Config(dict):
    """
    Config class for reading and writing of yaml config files.

    Inherits from dict. Holds every knob of a run, with the published defaults where one exists.
    """
    def __init__(self, *args, **kwargs):
        """
        Initialize the config class.
        """
        super(Config, self).__init__(*args, **kwargs)

    def read_config(self, config_file: str = None):
        """
        Read the config file. Sections are merged key by key into the current values.
        """
        if config_file is not None:
            with open(config_file, "r") as f:
                loaded = yaml.load(f) or {}
            self.merge(_plain(loaded))

    def write_config(self, config_file: str = None):
        """
        Write the config file.
        """
        if config_file is not None:
            with open(config_file, "w") as f:
                yaml.dump(_plain(self), f)

    def merge(self, values: dict):
        """
        Merge a (possibly nested) dict into this config, one section level deep.
        """
        for key, value in values.items():
            if isinstance(value, dict) and isinstance(self.get(key), dict):
                self[key] = {**self[key], **value}
            else:
                self[key] = value

    def get_value(self, dotted_key: str):
        """
        Look up a "section.key" value.
        """
        section, _, key = dotted_key.partition(".")
        if not key:
            return self[section]
        return self[section][key]

    def set_value(self, dotted_key: str, value):
        """
        Set a "section.key" value.
        """
        section, _, key = dotted_key.partition(".")
        if not key:
            self[section] = value
        else:
            self.setdefault(section, {})[key] = value

    def digest(self) -> str:
        """
        SHA-256 of the canonical JSON form, used to tag artifacts.
        """
        canonical = json.dumps(_plain(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def validate(self, check_files: bool = True):
        """
        Check the numeric ranges of every knob.
        :param check_files: Also require the maze file to exist.
        :raises ConfigError: naming the first offending key.
        """
        def require(condition: bool, key: str, message: str):
            if not condition:
                raise ConfigError(f"{key}: {message} (got {self.get_value(key)!r})")

        try:
            for key in ["dataset.n_traj", "dataset.max_len", "training.epochs_rep", "training.steps_per_epoch",
                        "training.batch_size", "training.latent_dim", "policy.epochs", "policy.steps_per_epoch",
                        "policy.batch_size", "evaluation.episodes", "evaluation.seeds", "evaluation.n_boot",
                        "evaluation.reward_samples"]:
                require(int(self.get_value(key)) >= 0, key, "must be non-negative")
            for key in ["dataset.n_traj", "dataset.max_len", "training.batch_size", "training.latent_dim",
                        "policy.batch_size"]:
                require(int(self.get_value(key)) >= 1, key, "must be positive")
            require(0.5 <= float(self.get_value("training.expectile")) < 1.0, "training.expectile",
                    "must lie in [0.5, 1)")
            require(0.0 <= float(self.get_value("training.target_tau")) <= 1.0, "training.target_tau",
                    "must lie in [0, 1]")
            require(float(self.get_value("training.lr")) > 0.0, "training.lr", "must be positive")
            require(float(self.get_value("policy.lr")) > 0.0, "policy.lr", "must be positive")
            require(float(self.get_value("training.orthonorm_coeff")) >= 0.0, "training.orthonorm_coeff",
                    "must be non-negative")
            for key in ["training.query_p_cur", "training.latent_mix_start", "training.latent_mix_end",
                        "policy.latent_mix"]:
                require(0.0 <= float(self.get_value(key)) <= 1.0, key, "must be a probability")
            require(all(int(h) >= 1 for h in self.get_value("training.hidden")), "training.hidden",
                    "widths must be positive")
            require(all(int(h) >= 1 for h in self.get_value("policy.hidden")), "policy.hidden",
                    "widths must be positive")
            require(float(self.get_value("policy.beta_low")) >= 0.0, "policy.beta_low", "must be non-negative")
            require(float(self.get_value("policy.beta_high")) >= 0.0, "policy.beta_high", "must be non-negative")
            require(float(self.get_value("policy.adv_clip")) > 0.0, "policy.adv_clip", "must be positive")
            require(self.get_value("policy.advantage") in ("proxy", "full"), "policy.advantage",
                    "must be 'proxy' or 'full'")
            require(self.get_value("dataset.start") in ("uniform", "tasks"), "dataset.start",
                    "must be 'uniform' or 'tasks'")
        except KeyError as e:
            raise ConfigError(f"missing config key {e}") from e
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"malformed config value: {e}") from e

        if check_files and not os.path.exists(self["maze"]):
            raise ConfigError(f"maze: file {self['maze']!r} does not exist")

    @classmethod
    def from_file(cls, config_file: str = None, default_first: bool = True):
        """
        Create a new instance of Config from a config file.
        """
        if default_first:
            config = cls.default()
        else:
            config = cls()
        config.read_config(config_file)
        return config

    @classmethod
    def from_dict(cls, config_dict: dict = None, default_first: bool = True):
        """
        Create a new instance of Config from a dictionary.
        """
        if default_first:
            config = cls.default()
        else:
            config = cls()
        config.merge(config_dict or {})
        return config

    @staticmethod
    def default():
        """
        Return a default config.
        """
        return Config.from_dict(
            {
                "maze": "./data/maze_medium.json",
                "output_dir": "./out",
                "seed": 0,
                "dataset": {
                    "n_traj": 100000,
                    "max_len": 100,
                    "start": "uniform"
                },
                "training": {
                    "epochs_rep": 50,
                    "steps_per_epoch": 1000,
                    "batch_size": 32,
                    "lr": 3e-4,
                    "expectile": 0.7,
                    "target_tau": 0.005,
                    "latent_dim": 24,
                    "hidden": [64, 64],
                    "orthonorm_coeff": 1e-4,
                    "query_p_cur": 0.2,
                    "latent_mix_start": 0.0,
                    "latent_mix_end": 0.5,
                    "exact_intrinsic_reward": True
                },
                "policy": {
                    "epochs": 20,
                    "steps_per_epoch": 1000,
                    "batch_size": 32,
                    "lr": 3e-4,
                    "hidden": [64, 64],
                    "beta_low": 3.0,
                    "beta_high": 0.1,
                    "adv_clip": 5.0,
                    "advantage": "proxy",
                    "latent_mix": 0.5,
                    "temperature": 1.0
                },
                "evaluation": {
                    "episodes": 50,
                    "seeds": 3,
                    "n_boot": 2000,
                    "reward_samples": 100000,
                    "greedy": False,
                    "parallel_eval": False,
                    "workers": 4
                }
            },
            default_first=False
        )


def _plain(value):
    """
    Convert ruamel containers (CommentedMap, CommentedSeq) into plain dicts and lists.
    """
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value
