"""Adapter behavior: path equivalence, zero-copy, validation, versioning."""

from __future__ import annotations

import contextlib
import json
import re
import threading

import numpy as np
import pytest

import hired
from hired.cli import main
from hired.errors import (
    ConfigError,
    MissingLayer,
    NegativeValue,
    NonFiniteValue,
    ShapeMismatch,
)
from hired_bindings import allocate_and_select, coerce_buffer, version

from bindings_report import record_acceptance, register_acceptance

register_acceptance(9, "bindings equivalence")


@contextlib.contextmanager
def criterion(num, name):
    try:
        yield
    except BaseException:
        record_acceptance(num, name, False)
        raise
    record_acceptance(num, name, True)


def buffers_of(dump):
    return [p.tensor for p in dump.partitions]


def call(dump, config=None, buffers=None):
    return allocate_and_select(
        buffers if buffers is not None else buffers_of(dump),
        num_heads=dump.num_heads,
        layers_captured=dump.layers_captured,
        patch_grid=dump.patch_grid,
        grid=dump.grid,
        image_size=dump.image_size,
        config=config,
    )


class TestVersion:
    def test_constant_across_calls(self):
        assert version() == version()

    def test_matches_engine_and_cli(self, capsys):
        assert version() == hired.__version__
        assert main(["--version"]) == 0
        assert capsys.readouterr().out.strip() == version()

    def test_dotted_triple(self):
        assert re.fullmatch(r"\d+\.\d+\.\d+", version())


class TestBuffers:
    def test_contiguous_f32_is_consumed_by_reference(self):
        arr = np.ones((2, 1, 4), dtype=np.float32)
        assert coerce_buffer(arr) is arr

    def test_other_layouts_are_copied(self):
        f64 = np.ones((2, 1, 4), dtype=np.float64)
        out = coerce_buffer(f64)
        assert out.dtype == np.float32
        assert not np.shares_memory(out, f64)
        strided = np.ones((4, 1, 2), dtype=np.float32).transpose(2, 1, 0)
        assert coerce_buffer(strided).flags["C_CONTIGUOUS"]

    def test_caller_mutations_are_visible(self):
        # the adapter snapshots nothing: rerunning after the host writes
        # new attention into the same buffer reflects the new values
        buf = np.zeros((1, 1, 4), dtype=np.float32)
        config = hired.EngineConfig(budget=2, final_layer=22, init_layer=22)
        kwargs = dict(num_heads=1, layers_captured=[22], patch_grid=(2, 2))
        buf[0, 0] = [0.7, 0.3, 0.0, 0.0]
        _, before = allocate_and_select([buf], config=config, **kwargs)
        assert before.partitions[0].kept_indices == [0, 1]
        buf[0, 0] = [0.0, 0.0, 0.6, 0.4]
        _, after = allocate_and_select([buf], config=config, **kwargs)
        assert after.partitions[0].kept_indices == [2, 3]

    def test_nested_lists_accepted(self):
        rows = [[[0.1, 0.2, 0.3, 0.4]]]
        plan, result = allocate_and_select(
            [rows], num_heads=1, layers_captured=[22], patch_grid=(2, 2),
            config=hired.EngineConfig(budget=2, init_layer=22, final_layer=22),
        )
        assert result.partitions[0].kept_indices == [2, 3]

    def test_noncontiguous_matches_contiguous(self):
        rng = np.random.default_rng(8)
        base = rng.random((4, 2, 2), dtype=np.float32)
        view = base.transpose(2, 1, 0)  # (2, 2, 4), non-contiguous
        copied = np.ascontiguousarray(view)
        config = hired.EngineConfig(budget=2, init_layer=0, final_layer=22)
        kwargs = dict(num_heads=2, layers_captured=[0, 22], patch_grid=(2, 2))
        _, a = allocate_and_select([view], config=config, **kwargs)
        _, b = allocate_and_select([copied], config=config, **kwargs)
        assert [p.kept_indices for p in a.partitions] == \
               [p.kept_indices for p in b.partitions]

    def test_f64_input_equals_precast_f32(self):
        rng = np.random.default_rng(9)
        wide = rng.random((2, 2, 9))
        narrow = wide.astype(np.float32)
        config = hired.EngineConfig(budget=5, init_layer=0, final_layer=22)
        kwargs = dict(num_heads=2, layers_captured=[0, 22], patch_grid=(3, 3))
        _, a = allocate_and_select([wide], config=config, **kwargs)
        _, b = allocate_and_select([narrow], config=config, **kwargs)
        assert [p.kept_indices for p in a.partitions] == \
               [p.kept_indices for p in b.partitions]


class TestValidation:
    def small(self):
        return hired.generate_synthetic_dump(
            seed=1, k=4, num_heads=2, tokens_per_partition=4
        )

    def test_mismatched_heads(self):
        dump = self.small()
        with pytest.raises(ShapeMismatch) as exc:
            allocate_and_select(
                buffers_of(dump), num_heads=3,
                layers_captured=dump.layers_captured,
                patch_grid=dump.patch_grid, grid=dump.grid,
            )
        assert "heads" in str(exc.value)

    def test_mismatched_layer_count(self):
        dump = self.small()
        with pytest.raises(ShapeMismatch):
            allocate_and_select(
                buffers_of(dump), num_heads=dump.num_heads,
                layers_captured=[0, 22],
                patch_grid=dump.patch_grid, grid=dump.grid,
            )

    def test_wrong_rank(self):
        with pytest.raises(ShapeMismatch):
            allocate_and_select(
                [np.ones((2, 4), dtype=np.float32)], num_heads=2,
                layers_captured=[0, 22], patch_grid=(2, 2),
            )

    def test_sub_image_shape_differs(self):
        dump = self.small()
        buffers = buffers_of(dump)
        buffers[2] = np.ones((3, 2, 5), dtype=np.float32)
        with pytest.raises(ShapeMismatch) as exc:
            call(dump, buffers=buffers)
        assert "partition 2" in str(exc.value)

    def test_non_finite_rejected(self):
        dump = self.small()
        buffers = [b.copy() for b in buffers_of(dump)]
        buffers[1][0, 0, 0] = np.nan
        with pytest.raises(NonFiniteValue):
            call(dump, buffers=buffers)

    def test_negative_rejected(self):
        dump = self.small()
        buffers = [b.copy() for b in buffers_of(dump)]
        buffers[3][1, 1, 2] = -0.25
        with pytest.raises(NegativeValue):
            call(dump, buffers=buffers)

    def test_no_buffers(self):
        with pytest.raises(ConfigError) as exc:
            allocate_and_select(
                [], num_heads=1, layers_captured=[0], patch_grid=(2, 2)
            )
        assert exc.value.field == "buffers"

    def test_grid_inconsistent_with_buffer_count(self):
        dump = self.small()
        with pytest.raises(ConfigError) as exc:
            allocate_and_select(
                buffers_of(dump), num_heads=dump.num_heads,
                layers_captured=dump.layers_captured,
                patch_grid=dump.patch_grid, grid=(1, 2),
            )
        assert exc.value.field == "grid"

    def test_unsorted_layers(self):
        dump = self.small()
        with pytest.raises(ConfigError) as exc:
            allocate_and_select(
                buffers_of(dump), num_heads=dump.num_heads,
                layers_captured=[22, 11, 0],
                patch_grid=dump.patch_grid, grid=dump.grid,
            )
        assert exc.value.field == "layers"

    def test_missing_layer_propagates(self):
        dump = hired.generate_synthetic_dump(
            seed=1, k=0, num_heads=1, tokens_per_partition=4,
            layers_captured=[0, 11],
        )
        with pytest.raises(MissingLayer):
            call(dump)  # default final layer 22 was not captured


class TestResults:
    def test_twenty_percent_of_five_by_576(self):
        dump = hired.generate_synthetic_dump(seed=1)
        plan, result = call(dump, hired.EngineConfig(budget=0.2))
        assert plan.budget == 576
        assert result.total_kept == 576
        assert plan.n_full == 288

    def test_file_and_memory_paths_agree_on_the_default_dump(self, tmp_path):
        dump = hired.generate_synthetic_dump(
            seed=1, k=4, num_heads=4, tokens_per_partition=16
        )
        dump_dir = tmp_path / "dump"
        hired.write_attention_dump(dump, dump_dir)
        manifest = tmp_path / "by_file.json"
        assert main(["run", "--dump", str(dump_dir), "--budget", "0.2",
                     "--out", str(manifest)]) == 0
        plan, result = call(dump, hired.EngineConfig(budget=0.2))
        doc = json.loads(manifest.read_text("utf-8"))
        by_file = {e["id"]: e["kept_indices"] for e in doc["partitions"]}
        by_memory = {p.partition_id: p.kept_indices for p in result.partitions}
        assert by_file == by_memory

    def test_concurrent_calls_match_sequential(self):
        dump = hired.generate_synthetic_dump(
            seed=5, k=4, num_heads=2, tokens_per_partition=16
        )
        config = hired.EngineConfig(budget=0.4)
        _, expected = call(dump, config)
        want = [p.kept_indices for p in expected.partitions]
        results = [None] * 8
        def work(i):
            _, res = call(dump, config)
            results[i] = [p.kept_indices for p in res.partitions]
        threads = [threading.Thread(target=work, args=(i,)) for i in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert all(r == want for r in results)


def test_9_bindings_equivalence(tmp_path):
    with criterion(9, "bindings equivalence"):
        rng = np.random.default_rng(99)
        budgets = ["0.1", "0.15", "0.2", "0.25", "0.5", "0.75", "1.0"]
        aggs = ["sum", "mean", "max", "head:0"]
        for case in range(50):
            k = int(rng.integers(0, 5))
            heads = int(rng.integers(1, 5))
            side = int(rng.integers(2, 5))
            layers = [0, 11, 22] if rng.integers(0, 2) else [0, 22]
            dump = hired.generate_synthetic_dump(
                seed=1000 + case, k=k, num_heads=heads,
                tokens_per_partition=side * side, layers_captured=layers,
            )
            capacity = (k + 1) * side * side
            if rng.integers(0, 2):
                budget_text = budgets[int(rng.integers(0, len(budgets)))]
                budget = float(budget_text)
            else:
                budget = int(rng.integers(0, capacity + 1))
                budget_text = str(budget)
            alpha_text = f"{rng.integers(0, 101) / 100:.2f}"
            agg = aggs[int(rng.integers(0, len(aggs)))]
            distribution = "even" if rng.integers(0, 2) else "content"
            emit = bool(rng.integers(0, 2))
            config = hired.EngineConfig(
                budget=budget, alpha=float(alpha_text), aggregation=agg,
                distribution=distribution, emit_scores=emit,
            )

            base = tmp_path / f"case{case}"
            base.mkdir()
            dump_dir = base / "dump"
            hired.write_attention_dump(dump, dump_dir)
            by_file = base / "by_file.json"
            argv = ["run", "--dump", str(dump_dir),
                    "--budget", budget_text, "--alpha", alpha_text,
                    "--agg", agg, "--distribution", distribution,
                    "--out", str(by_file)]
            if emit:
                argv.append("--emit-scores")
            assert main(argv) == 0

            plan, result = call(dump, config)
            by_memory = base / "by_memory.json"
            hired.write_selection_manifest(result, plan, config, by_memory)
            assert by_file.read_bytes() == by_memory.read_bytes()
