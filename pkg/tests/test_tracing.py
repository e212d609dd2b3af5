"""
Tests for trace persistence, offline replay and diagnosis
"""
import hashlib

import pytest

from bench.scenarios import agent_names, run_scenario
from bench.tasks import COUNT_FREQUENCY, generate_task
from dig_runtime.exceptions import TraceFormatError
from dig_runtime.scheduler import run
from dig_runtime.schemas import RecordKind, RunConfig, ThresholdSet, TraceRecord
from dig_runtime.utils.validation import InputValidator
from graph.interaction_graph import InteractionGraph
from tracing.diagnose import diagnose
from tracing.records import MemorySink, TraceWriter, decode_record, encode_record, read_trace, write_trace
from tracing.replay import replay


SWEEP_POLICIES = {
    1: ["honest", "chaos"],
    3: ["honest", "chaos", "honest,a2=premature-submitter", "honest,a2=hot-potato,a3=hot-potato"],
    6: ["honest", "chaos", "honest,a4=silent-waiter", "honest,a3=void-router"],
}
SWEEP = [
    (agents, policies, healing, seed)
    for agents, specs in SWEEP_POLICIES.items()
    for policies in specs
    for healing in (False, True)
    for seed in range(5)
]


def honest_config(agents=3, healing=False, seed=0):
    names = agent_names(agents)
    return RunConfig(
        agents=InputValidator.parse_policies("honest", names),
        initial_recipients=names[:1],
        healing=healing,
        seed=seed,
    )


@pytest.fixture
def honest_trace(tmp_path):
    """Trace file of a clean three-agent run"""
    path = tmp_path / "run.jsonl"
    task = generate_task(COUNT_FREQUENCY, 12, 3)
    with TraceWriter(path) as sink:
        state, result = run(honest_config(), task.payload, sink=sink)
    return path, state, result


class TestRecordCodec:
    """Tests for single-line encoding"""

    def test_field_order(self):
        record = TraceRecord(t=4, kind=RecordKind.ACTIVATION_END, data={"activation_id": "v1"})
        assert encode_record(record) == '{"t":4,"kind":"activation_end","data":{"activation_id":"v1"}}'

    def test_decode(self):
        record = decode_record('{"t":2,"kind":"event_delivered","data":{"event_id":"e1","agent":"a2"}}')
        assert record.kind == RecordKind.EVENT_DELIVERED
        assert record.data["agent"] == "a2"

    def test_invalid_json(self):
        with pytest.raises(TraceFormatError, match="line 7"):
            decode_record("{not json", 7)

    def test_unknown_kind(self):
        with pytest.raises(TraceFormatError):
            decode_record('{"t":1,"kind":"teleport","data":{}}')

    def test_not_an_object(self):
        with pytest.raises(TraceFormatError):
            decode_record("[1, 2]")


class TestTraceFiles:
    """Tests for reading and writing JSONL traces"""

    def test_file_matches_memory(self, honest_trace):
        path, state, _ = honest_trace
        records = read_trace(path)
        assert records[0].kind == RecordKind.RUN_META
        assert records[-1].kind == RecordKind.RUN_END
        assert [r.t for r in records] == sorted({r.t for r in records})

    def test_write_trace(self, tmp_path):
        sink = MemorySink()
        run(honest_config(), generate_task(COUNT_FREQUENCY, 6, 0).payload, sink=sink)
        path = write_trace(sink.records, tmp_path / "out" / "trace.jsonl")
        assert path.read_text(encoding="utf-8").splitlines() == sink.lines()

    def test_truncated_last_line(self, honest_trace, tmp_path):
        path, _, _ = honest_trace
        text = path.read_text(encoding="utf-8").rstrip("\n")
        cut = tmp_path / "cut.jsonl"
        cut.write_text(text[:-5], encoding="utf-8")
        with pytest.raises(TraceFormatError, match="truncated record"):
            read_trace(cut)

    def test_missing_final_newline_is_fine(self, honest_trace, tmp_path):
        path, _, _ = honest_trace
        text = path.read_text(encoding="utf-8").rstrip("\n")
        bare = tmp_path / "bare.jsonl"
        bare.write_text(text, encoding="utf-8")
        assert len(read_trace(bare)) == len(read_trace(path))

    def test_ticks_must_increase(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"t":0,"kind":"run_meta","data":{}}\n{"t":3,"kind":"run_end","data":{}}\n'
            '{"t":3,"kind":"run_end","data":{}}\n',
            encoding="utf-8",
        )
        with pytest.raises(TraceFormatError, match="line 3"):
            read_trace(path)

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "gaps.jsonl"
        path.write_text('{"t":0,"kind":"run_meta","data":{}}\n\n{"t":1,"kind":"run_end","data":{}}\n')
        assert len(read_trace(path)) == 2

    def test_blob_sidecar(self, tmp_path):
        task = generate_task(COUNT_FREQUENCY, 6, 1)
        blobs = tmp_path / "blobs"
        with TraceWriter(tmp_path / "trace.jsonl", blob_dir=blobs) as sink:
            run(honest_config(), task.payload, sink=sink)
        digest = hashlib.sha256(task.payload.body).hexdigest()
        assert (blobs / f"{digest}.bin").read_bytes() == task.payload.body
        assert len(list(blobs.iterdir())) > 1


class TestReplay:
    """Offline replay rebuilds the online graph"""

    def test_fingerprint_matches_online(self, honest_trace):
        path, state, _ = honest_trace
        assert replay(path).fingerprint() == state.graph.fingerprint()

    @pytest.mark.parametrize("name", ["s-et", "s-mc", "s-dl", "s-oe", "s-er", "s-cla", "s-rsp"])
    @pytest.mark.parametrize("healing", [False, True])
    def test_fault_runs_replay(self, name, healing):
        state, _, _ = run_scenario(name, healing=healing)
        graph = replay(state.sink.records)
        assert graph.fingerprint() == state.graph.fingerprint()
        graph.check_invariants()

    @pytest.mark.parametrize("agents,policies,healing,seed", SWEEP)
    def test_seeded_sweep(self, agents, policies, healing, seed):
        names = agent_names(agents)
        config = RunConfig(
            agents=InputValidator.parse_policies(policies, names),
            initial_recipients=names[:1],
            healing=healing,
            seed=seed,
            max_ticks=400,
            idle_limit=15,
        )
        state, _ = run(config, generate_task(COUNT_FREQUENCY, 24, seed).payload)
        graph = replay(state.sink.records)
        assert graph.fingerprint() == state.graph.fingerprint()
        graph.check_invariants()
        state.graph.check_invariants()

    def test_must_start_with_run_meta(self):
        records = [TraceRecord(t=1, kind=RecordKind.RUN_END, data={})]
        with pytest.raises(TraceFormatError, match="run_meta"):
            replay(records)

    def test_rejects_repeated_tick(self, honest_trace):
        path, _, _ = honest_trace
        records = read_trace(path)
        records[2] = records[2].model_copy(update={"t": records[1].t})
        with pytest.raises(TraceFormatError, match="line 3"):
            replay(records)

    def test_empty_trace(self):
        graph = replay([])
        assert graph.fingerprint() == InteractionGraph().fingerprint()
        assert graph.stats()["events"] == 0

    def test_healing_leaves_clean_runs_alone(self):
        task = generate_task(COUNT_FREQUENCY, 30, 5)
        plain, _ = run(honest_config(agents=4), task.payload)
        healed, _ = run(honest_config(agents=4, healing=True), task.payload)
        assert healed.interventions == []
        assert replay(healed.sink.records).fingerprint() == replay(plain.sink.records).fingerprint()


class TestDiagnose:
    """Offline diagnosis agrees with online detection"""

    @pytest.mark.parametrize("name", ["s-et", "s-mc", "s-dl", "s-oe", "s-er", "s-cla", "s-rsp"])
    def test_same_signals_as_online(self, name):
        state, result, _ = run_scenario(name)
        report = diagnose(state.sink.records)
        assert report.keys() == {s.key() for s in result.signals}
        assert report.status == result.status.value

    def test_clean_run(self, honest_trace):
        path, _, _ = honest_trace
        report = diagnose(path)
        assert report.signals == []
        assert sum(report.counts().values()) == 0
        assert report.status == "terminal"

    def test_thresholds_from_run_meta(self):
        state, _, _ = run_scenario("s-oe")
        report = diagnose(state.sink.records)
        assert report.thresholds.mc_window == 60

    def test_overrides(self):
        state, _, _ = run_scenario("s-dl")
        base = diagnose(state.sink.records)
        wide = diagnose(state.sink.records, dl_window=10_000)
        assert base.counts()["DL"] >= 1
        assert wide.counts()["DL"] == 0
        assert wide.thresholds.dl_window == 10_000

    def test_explicit_thresholds(self):
        state, _, _ = run_scenario("s-er")
        report = diagnose(state.sink.records, ThresholdSet(er_max_reroutes=1_000))
        assert report.counts()["ER"] == 0

    def test_invalid_override(self):
        state, _, _ = run_scenario("s1")
        with pytest.raises(ValueError):
            diagnose(state.sink.records, dl_window=0)

    def test_summary(self):
        state, _, _ = run_scenario("s-et")
        summary = diagnose(state.sink.records).to_summary()
        assert summary["counts"]["ET"] == 1
        assert summary["signals"][0]["class"] == "ET"
        assert summary["records"] == len(state.sink.records)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
