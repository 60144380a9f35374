"""Tiny helper: expose a dataclass config as command-line flags."""

import argparse
from dataclasses import asdict, fields


def parse_config(cls, description):
    parser = argparse.ArgumentParser(description=description)
    for f in fields(cls):
        flag = "--" + f.name.replace("_", "-")
        parser.add_argument(flag, type=type(f.default), default=f.default)
    return cls(**vars(parser.parse_args()))


def describe(cfg):
    return " ".join(f"{k}={v}" for k, v in asdict(cfg).items())
