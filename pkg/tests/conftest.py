import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

SMALL_CONFIG = """\
schema = "corrdyn-pipeline/1"
seed = 7

[output]
dir = "small-run"

[synth]
subjects = 2
orders = ["standard", "reverse"]
n_phrases = 16
noise_uv = 2.0
effects = "demo"

[preprocess]
hp = 0.1
lp = 100.0
notch = 50.0
epoch = [-250, 500]
baseline = [-250, 0]
phrase_epoch = [-250, 1850]

[[recipe]]
preset = "overall-standard"

[[recipe]]
preset = "content-words-64"
bin_ms = 10

[[recipe]]
preset = "all-verbs"
bin_ms = 10

[[recipe]]
preset = "verbs-standard"
bin_ms = 10
n_axes = 3

[[recipe]]
preset = "all-nouns"
bin_ms = 10

[[recipe]]
preset = "categories-mean"
bin_ms = 10

[[compare]]
kind = "cosine"
a = "all-nouns"
b = "categories-mean"
ka = 3
kb = 3

[[compare]]
kind = "pearson"
recipe = "all-nouns"
axis = 1
x = { role = "subject", order = "standard" }
y = { role = "object", order = "standard" }
pair_by = "category"

[[compare]]
kind = "anova"
recipe = "categories-mean"
axis = 1
project = { role = ["subject", "object"], target = "yes" }
group_by = "biological"

[[compare]]
kind = "sign-test"
recipe = "verbs-standard"
axis = 1
a = { biological = "no" }
b = { biological = "yes" }
"""


@pytest.fixture(scope="session")
def small_config_path(tmp_path_factory):
    d = tmp_path_factory.mktemp("cfg")
    p = d / "small.toml"
    p.write_text(SMALL_CONFIG, encoding="utf-8")
    return p


@pytest.fixture(scope="session")
def small_run(small_config_path, tmp_path_factory):
    """``(config, bundle, out_dir)`` of one small synthetic run written to disk."""
    from corrdyn.pipeline import load_config, run_pipeline

    out = tmp_path_factory.mktemp("run") / "out"
    cfg = load_config(small_config_path, output_dir=str(out))
    bundle = run_pipeline(cfg)
    return cfg, bundle, out


def pytest_terminal_summary(terminalreporter):
    from _acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=lambda k: int(k[1:])):
        terminalreporter.write_line(RESULTS[key])
