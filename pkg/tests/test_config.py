import pytest

from memxl.config import (
    KNOWN_KEYS,
    RunConfig,
    apply_overrides,
    build_configs,
    build_schedule,
    parse_kv,
    read_config,
)


class TestParsing:
    def test_key_value_lines_with_comments(self):
        text = """
        # run shape
        n_layers = 3
        d_model = 32   # trailing comment
        corpus = data/train.txt

        schedule = uniform
        schedule_p = 0.25
        """
        kv = parse_kv(text)
        assert kv["n_layers"] == "3"
        assert kv["d_model"] == "32"
        assert kv["corpus"] == "data/train.txt"
        assert len(kv) == 5

    def test_malformed_lines_carry_line_numbers(self):
        with pytest.raises(ValueError, match="line 2"):
            parse_kv("a = 1\nnot a pair\n")
        with pytest.raises(ValueError, match="empty key or value"):
            parse_kv("a =")
        with pytest.raises(ValueError, match="empty key or value"):
            parse_kv("= 3")

    def test_read_config(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("steps = 10\n")
        assert read_config(path) == {"steps": "10"}

    def test_overrides_win(self):
        kv = apply_overrides({"steps": "10", "seed": "1"}, ["steps=20", "base_lr = 0.01"])
        assert kv["steps"] == "20"
        assert kv["seed"] == "1"
        assert kv["base_lr"] == "0.01"

    def test_bad_override_rejected(self):
        with pytest.raises(ValueError, match="override"):
            apply_overrides({}, ["steps"])
        with pytest.raises(ValueError, match="override"):
            apply_overrides({}, ["=5"])


class TestBuildConfigs:
    def test_defaults_fill_in(self):
        model_cfg, train_cfg, run_cfg = build_configs({}, vocab_size=26)
        assert model_cfg.n_layers == 4
        assert model_cfg.d_model == 64
        assert model_cfg.vocab_size == 26
        assert train_cfg.steps == 1000
        assert train_cfg.schedule.variant == "none"
        assert run_cfg.level == "char"

    def test_explicit_values_and_types(self):
        kv = {
            "n_layers": "2",
            "d_model": "16",
            "d_inner": "32",
            "n_heads": "2",
            "d_head": "8",
            "mem_len": "8",
            "block_len": "8",
            "vocab_size": "11",
            "beta": "0.1",
            "steps": "50",
            "base_lr": "0.002",
            "schedule": "linear",
            "eval_split": "0.1",
            "level": "word",
        }
        model_cfg, train_cfg, run_cfg = build_configs(kv)
        assert model_cfg.beta == 0.1
        assert isinstance(model_cfg.n_layers, int)
        assert train_cfg.base_lr == 0.002
        assert train_cfg.schedule.variant == "linear"
        assert run_cfg.eval_split == 0.1
        assert run_cfg.level == "word"

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            build_configs({"n_layerz": "3"}, vocab_size=11)

    def test_vocab_size_required_without_corpus(self):
        with pytest.raises(ValueError, match="vocab_size missing"):
            build_configs({})

    def test_config_vocab_size_beats_corpus(self):
        model_cfg, _, _ = build_configs({"vocab_size": "99"}, vocab_size=26)
        assert model_cfg.vocab_size == 99

    def test_bad_value_names_the_key(self):
        with pytest.raises(ValueError, match="config key steps"):
            build_configs({"steps": "ten"}, vocab_size=11)

    def test_schedule_building(self):
        assert build_schedule({}).variant == "none"
        sched = build_schedule({"schedule": "protect_both", "schedule_p": "0.3"})
        assert sched.variant == "protect_both"
        assert sched.p == 0.3
        with pytest.raises(ValueError, match="needs a probability"):
            build_schedule({"schedule": "uniform"})
        with pytest.raises(ValueError, match="takes no probability"):
            build_schedule({"schedule": "linear", "schedule_p": "0.5"})

    def test_every_known_key_lands_somewhere(self):
        # guard against key tables drifting out of sync with the dataclasses
        kv = {
            "n_layers": "2", "d_model": "8", "d_inner": "16", "n_heads": "2",
            "d_head": "4", "mem_len": "4", "block_len": "4", "vocab_size": "11",
            "dropout": "0.0", "beta": "0.0", "init_std": "0.02", "param_dtype": "float64",
            "steps": "5", "batch_size": "1", "base_lr": "0.001", "adam_beta1": "0.9",
            "adam_beta2": "0.999", "adam_eps": "1e-8", "cosine_max_iters": "10",
            "clip_norm": "0.25", "seed": "0", "eval_interval": "5", "eval_context": "8",
            "eval_block": "4", "window": "10", "threshold": "0.2",
            "schedule": "uniform", "schedule_p": "0.2",
            "corpus": "x.txt", "level": "char", "checkpoint": "x.ckpt", "log": "x.log",
            "checkpoint_every": "0", "eval_split": "0.0",
        }
        assert set(kv) == set(KNOWN_KEYS)
        build_configs(kv)


class TestRunConfig:
    def test_validation(self):
        with pytest.raises(ValueError, match="level"):
            RunConfig(level="byte")
        with pytest.raises(ValueError, match="eval_split"):
            RunConfig(eval_split=1.0)
        with pytest.raises(ValueError, match="checkpoint_every"):
            RunConfig(checkpoint_every=-1)
