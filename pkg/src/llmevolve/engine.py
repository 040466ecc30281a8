"""Run orchestration: epoch loop, evaluation pipeline, migration, lifecycle.

The engine owns all state mutation. Every run lives in a run directory
containing the config snapshot, a line-delimited JSON event log, per-solution
code and logs, checkpoints, and the best artifact found. With the replay
backend and a fixed master seed, two runs emit byte-identical event logs.
"""

from __future__ import annotations

import hashlib
import json
import pickle
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from . import diffengine, llm, operators, sandbox
from .config import RunConfig
from .core import (
    STATUS_GENERATION_FAILED,
    STATUS_INVALID_ARTIFACT,
    STATUS_MEMORY_EXCEEDED,
    STATUS_PENDING,
    STATUS_RUNTIME_ERROR,
    STATUS_TIMEOUT,
    STATUS_VALID,
    IslandState,
    Prompt,
    Solution,
)
from .operators import IslandRngs
from .problems import ArtifactError, ProblemSpec, get_problem

EVENT_LOG_NAME = "events.jsonl"
TRANSCRIPT_NAME = "transcripts.jsonl"
CONFIG_SNAPSHOT_NAME = "config.yaml"
FEEDBACK_TAIL_CHARS = 2000


class CheckpointError(RuntimeError):
    """A checkpoint file is missing, truncated, or fails its digest."""


@dataclass
class MigrationEvent:
    epoch: int
    source_island: int
    dest_islands: list[int]
    migrated_ids: list[str]


@dataclass
class RunState:
    islands: list[IslandState]
    rngs: list[IslandRngs]
    epoch: int = 0
    first_migration_done: bool = False
    event_log_pos: int = 0
    backend_state: object = None
    initial_prompt_ids: list[str] = field(default_factory=list)
    trivial_code: str = ""


@dataclass
class RunSummary:
    problem_id: str
    epochs_run: int
    best_island: int
    best_solution_id: Optional[str]
    best_fitness: float
    best_objective: Optional[float]
    migration_events: int
    step_counts: dict[str, int]
    finished: bool


def _derive_rng(master_seed: int, island: int, stream: str) -> random.Random:
    blob = f"{master_seed}:{island}:{stream}".encode()
    seed = int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")
    return random.Random(seed)


def make_backend(config: RunConfig, run_dir: Path):
    if config.backend == "replay":
        return llm.ReplayBackend.from_file(run_dir / TRANSCRIPT_NAME)
    return llm.HttpBackend(config.base_url)


class _Run:
    """One in-progress run bound to its directory, config and backend."""

    def __init__(self, config: RunConfig, run_dir: Path, backend, state: RunState):
        self.config = config
        self.run_dir = run_dir
        self.backend = backend
        self.state = state
        self.problem: ProblemSpec = get_problem(config.problem_id)
        (run_dir / "solutions").mkdir(parents=True, exist_ok=True)
        (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
        self._event_fh = None

    # -- event log --

    def _open_event_log(self) -> None:
        path = self.run_dir / EVENT_LOG_NAME
        if not path.exists():
            path.touch()
        with open(path, "r+b") as fh:
            fh.truncate(self.state.event_log_pos)
        self._event_fh = open(path, "a", encoding="utf-8")

    def _emit(self, record: dict) -> None:
        self._event_fh.write(json.dumps(record, sort_keys=True) + "\n")
        self._event_fh.flush()

    # -- evaluation --

    def evaluate(self, sol: Solution) -> Solution:
        """Execute, parse and score one candidate, finalizing it in place."""
        if sol.status != STATUS_PENDING:
            sol.fitness = 0.0
            return sol
        outcome = sandbox.run_candidate(
            sol.code, self.config.limits, interpreter=self.config.interpreter
        )
        self._store_logs(sol, outcome)
        if outcome.status == sandbox.STATUS_TIMEOUT:
            sol.status = STATUS_TIMEOUT
        elif outcome.status == sandbox.STATUS_MEMORY_EXCEEDED:
            sol.status = STATUS_MEMORY_EXCEEDED
        elif outcome.status in (sandbox.STATUS_NONZERO_EXIT, sandbox.STATUS_SPAWN_ERROR):
            sol.status = STATUS_RUNTIME_ERROR
        elif outcome.artifact is None:
            sol.status = STATUS_INVALID_ARTIFACT
            sol.feedback = (sol.feedback or "") + "\nno artifact file was written"
        else:
            try:
                artifact = self.problem.parser(outcome.artifact)
                report = self.problem.scorer(artifact)
            except ArtifactError as exc:
                sol.status = STATUS_INVALID_ARTIFACT
                sol.feedback = f"invalid artifact: {exc}"
                sol.fitness = 0.0
                return sol
            sol.metrics = dict(report.metrics)
            if report.valid:
                sol.status = STATUS_VALID
                sol.fitness = report.fitness
                self._store_artifact(sol, outcome.artifact)
            else:
                sol.status = STATUS_INVALID_ARTIFACT
                sol.fitness = 0.0
                sol.feedback = "constraint violations: " + ", ".join(
                    f"{k}={v:.3g}" for k, v in sorted(report.violations.items())
                )
            return sol
        sol.fitness = 0.0
        return sol

    def _store_logs(self, sol: Solution, outcome: sandbox.ExecutionOutcome) -> None:
        base = self.run_dir / "solutions" / sol.id
        base.with_suffix(".py").write_text(sol.code, encoding="utf-8")
        base.with_suffix(".stdout").write_text(outcome.stdout, encoding="utf-8")
        base.with_suffix(".stderr").write_text(outcome.stderr, encoding="utf-8")
        sol.log_ref = f"solutions/{sol.id}"
        tail = (outcome.stderr or outcome.stdout)[-FEEDBACK_TAIL_CHARS:]
        if outcome.status != sandbox.STATUS_OK:
            sol.feedback = f"execution {outcome.status}:\n{tail}" if tail else f"execution {outcome.status}"
        elif tail:
            sol.feedback = tail

    def _store_artifact(self, sol: Solution, raw: bytes) -> None:
        path = self.run_dir / "solutions" / f"{sol.id}.artifact.json"
        path.write_bytes(raw)

    def _evaluate_batch(self, pending: list[Solution]) -> None:
        workers = self.config.sandbox_workers or self.config.num_islands
        if len(pending) <= 1 or workers <= 1:
            for sol in pending:
                self.evaluate(sol)
            return
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(self.evaluate, pending))

    # -- lifecycle --

    def initialize(self) -> None:
        for island, rngs in zip(self.state.islands, self.state.rngs):
            prompt, pending, failures = operators.initialize_island(
                island,
                self.config,
                self.backend,
                self.problem.brief,
                self.state.trivial_code,
                rngs,
            )
            self.state.initial_prompt_ids.append(prompt.id)
            self._evaluate_batch(pending)
            for sol in pending:
                result = island.try_insert(sol)
                self._emit(
                    {
                        "type": "init",
                        "island": island.id,
                        "solution": sol.id,
                        "status": sol.status,
                        "fitness": sol.fitness,
                        "objective": sol.metrics.get("objective"),
                        "insert": result.outcome,
                    }
                )
            for sol in failures:
                island.archive_solution(sol)
                self._emit(
                    {
                        "type": "init",
                        "island": island.id,
                        "solution": sol.id,
                        "status": sol.status,
                        "fitness": 0.0,
                        "objective": None,
                        "insert": "not_attempted",
                    }
                )

    def _no_evolution_step(
        self, island: IslandState, rngs: IslandRngs, epoch: int
    ) -> operators.OperatorOutcome:
        # Table-style baseline: always regenerate from the initial pair.
        prompt_id = self.state.initial_prompt_ids[island.id]
        prompt = island.lookup_prompt(prompt_id)
        request = llm.GenerationRequest(
            prompt_text=prompt.text,
            parent_code=self.state.trivial_code,
            problem_brief=self.problem.brief,
        )
        try:
            model, response = llm.generate(
                self.config.ensemble, request, self.backend, rngs.model, island_id=island.id
            )
            code = operators._apply_response(self.state.trivial_code, response)
            status, feedback = STATUS_PENDING, None
        except (
            llm.TransportError,
            diffengine.DiffParseError,
            diffengine.DiffApplyError,
        ) as exc:
            model, code = "", self.state.trivial_code
            status, feedback = STATUS_GENERATION_FAILED, f"generation failed: {exc}"
        sol = Solution(
            id=island.next_solution_id(),
            island_id=island.id,
            code=code,
            parent_id=None,
            parent_prompt_id=prompt_id,
            epoch_created=epoch,
            status=status,
            origin_island=island.id,
            feedback=feedback,
        )
        return operators.OperatorOutcome(sol, None, "no_evolution", model_used=model)

    def run_epochs(self, stop_after_epoch: Optional[int] = None) -> RunSummary:
        cfg = self.config
        state = self.state
        while state.epoch < cfg.epochs:
            epoch = state.epoch + 1
            crossover = operators.gate_crossover(
                state.first_migration_done, cfg.ablation.inspirations
            )
            outcomes: list[operators.OperatorOutcome] = []
            for island, rngs in zip(state.islands, state.rngs):
                if cfg.ablation.evolution:
                    outcome = operators.evolve_step(
                        island, cfg, self.backend, self.problem.brief, crossover, rngs, epoch
                    )
                else:
                    outcome = self._no_evolution_step(island, rngs, epoch)
                outcomes.append(outcome)
            self._evaluate_batch([o.new_solution for o in outcomes])
            for island, outcome in zip(state.islands, outcomes):
                sol = outcome.new_solution
                result = island.try_insert(sol)
                self._emit(
                    {
                        "type": "step",
                        "epoch": epoch,
                        "island": island.id,
                        "operator": outcome.operator,
                        "model": outcome.model_used,
                        "solution": sol.id,
                        "parent": sol.parent_id,
                        "status": sol.status,
                        "fitness": sol.fitness,
                        "objective": sol.metrics.get("objective"),
                        "insert": result.outcome,
                        "inspirations": len(outcome.inspiration_ids),
                    }
                )
            state.epoch = epoch
            if (
                cfg.ablation.evolution
                and cfg.num_islands > 1
                and epoch % cfg.migration_every == 0
            ):
                for event in self.migrate(epoch):
                    self._emit(
                        {
                            "type": "migration",
                            "epoch": event.epoch,
                            "source": event.source_island,
                            "dest": event.dest_islands,
                            "migrants": event.migrated_ids,
                        }
                    )
                self.checkpoint()
            if stop_after_epoch is not None and epoch >= stop_after_epoch:
                self.checkpoint()
                return self.summary(finished=False)
        self.checkpoint()
        self.export_best()
        return self.summary(finished=True)

    # -- migration --

    def migrate(self, epoch: int) -> list[MigrationEvent]:
        """Copy each island's top eligible solutions to its ring neighbors."""
        cfg = self.config
        state = self.state
        neighbors = cfg.neighbors()
        plans: list[tuple[int, list[Solution]]] = []
        for island in state.islands:
            pop = island.live()
            count = cfg.migrants_per_island(len(pop))
            eligible = [
                s
                for s in pop
                if not s.has_migrated and s.origin_island == island.id
            ]
            eligible.sort(key=lambda s: (-s.fitness, s.epoch_created, s.id))
            plans.append((island.id, eligible[:count]))
        events: list[MigrationEvent] = []
        for source_id, migrants in plans:
            dests = neighbors[source_id]
            for sol in migrants:
                sol.has_migrated = True
            for dest_id in dests:
                dest = state.islands[dest_id]
                for sol in migrants:
                    src_prompt = state.islands[source_id].lookup_prompt(
                        sol.parent_prompt_id
                    )
                    prompt_copy = Prompt(
                        id=dest.next_prompt_id(),
                        text=src_prompt.text,
                        island_id=dest_id,
                        epoch_created=epoch,
                    )
                    dest.add_prompt(prompt_copy)
                    copy = Solution(
                        id=dest.next_solution_id(),
                        island_id=dest_id,
                        code=sol.code,
                        parent_id=None,  # migrants root a fresh tree
                        parent_prompt_id=prompt_copy.id,
                        epoch_created=epoch,
                        metrics=dict(sol.metrics),
                        fitness=sol.fitness,
                        status=sol.status,
                        log_ref=sol.log_ref,
                        origin_island=dest_id,
                        has_migrated=False,
                        feedback=sol.feedback,
                        provenance={"migrated_from": source_id, "original_id": sol.id},
                    )
                    dest.try_insert(copy)
            events.append(
                MigrationEvent(
                    epoch=epoch,
                    source_island=source_id,
                    dest_islands=list(dests),
                    migrated_ids=[s.id for s in migrants],
                )
            )
        state.first_migration_done = True
        return events

    # -- checkpointing --

    def checkpoint(self) -> Path:
        self._event_fh.flush()
        self.state.event_log_pos = (self.run_dir / EVENT_LOG_NAME).stat().st_size
        self.state.backend_state = self.backend.get_state()
        payload = pickle.dumps({"config": self.config, "state": self.state})
        digest = hashlib.sha256(payload).hexdigest().encode("ascii")
        path = self.run_dir / "checkpoints" / f"epoch_{self.state.epoch:05d}.ckpt"
        path.write_bytes(digest + b"\n" + payload)
        return path

    # -- reporting --

    def best_solution(self) -> tuple[Optional[Solution], int]:
        best: Optional[Solution] = None
        best_island = -1
        for island in self.state.islands:
            for sol in island.all_solutions():
                if sol.status != STATUS_VALID:
                    continue
                if best is None or sol.fitness > best.fitness:
                    best, best_island = sol, island.id
        return best, best_island

    def export_best(self) -> None:
        best, _ = self.best_solution()
        if best is None:
            return
        best_dir = self.run_dir / "best"
        best_dir.mkdir(exist_ok=True)
        (best_dir / "solution.py").write_text(best.code, encoding="utf-8")
        artifact = self.run_dir / "solutions" / f"{best.id}.artifact.json"
        if artifact.exists():
            (best_dir / "artifact.json").write_bytes(artifact.read_bytes())
        (best_dir / "summary.json").write_text(
            json.dumps(
                {
                    "solution": best.id,
                    "island": best.island_id,
                    "fitness": best.fitness,
                    "objective": best.metrics.get("objective"),
                    "problem": self.config.problem_id,
                },
                indent=2,
                sort_keys=True,
            ),
            encoding="utf-8",
        )

    def summary(self, finished: bool) -> RunSummary:
        best, best_island = self.best_solution()
        counts: dict[str, int] = {}
        for island in self.state.islands:
            for sol in island.all_solutions():
                counts[sol.status] = counts.get(sol.status, 0) + 1
        migrations = sum(
            1
            for line in (self.run_dir / EVENT_LOG_NAME).read_text().splitlines()
            if '"type": "migration"' in line
        )
        return RunSummary(
            problem_id=self.config.problem_id,
            epochs_run=self.state.epoch,
            best_island=best_island,
            best_solution_id=best.id if best else None,
            best_fitness=best.fitness if best else 0.0,
            best_objective=best.metrics.get("objective") if best else None,
            migration_events=migrations,
            step_counts=counts,
            finished=finished,
        )

    def close(self) -> None:
        if self._event_fh is not None:
            self._event_fh.close()


def run(
    config: RunConfig,
    run_dir: str | Path,
    backend=None,
    stop_after_epoch: Optional[int] = None,
) -> RunSummary:
    """Execute a fresh run from epoch 1 to config.epochs in ``run_dir``."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    _write_config_snapshot(config, run_dir)
    if backend is None:
        backend = make_backend(config, run_dir)
    problem = get_problem(config.problem_id)
    islands = [
        IslandState(i, capacity=config.max_population) for i in range(config.num_islands)
    ]
    rngs = [
        IslandRngs(
            coin=_derive_rng(config.master_seed, i, "coin"),
            select=_derive_rng(config.master_seed, i, "select"),
            model=_derive_rng(config.master_seed, i, "model"),
        )
        for i in range(config.num_islands)
    ]
    state = RunState(islands=islands, rngs=rngs, trivial_code=problem.trivial_code)
    runner = _Run(config, run_dir, backend, state)
    try:
        runner._open_event_log()
        runner.initialize()
        return runner.run_epochs(stop_after_epoch=stop_after_epoch)
    finally:
        runner.close()


def resume(
    run_dir: str | Path,
    backend=None,
    stop_after_epoch: Optional[int] = None,
) -> RunSummary:
    """Continue a checkpointed run to completion.

    Restores the latest checkpoint exactly: the event log is truncated to the
    checkpointed position and the remaining epochs are executed once each.
    Resuming a finished run is a no-op that returns its summary.
    """
    run_dir = Path(run_dir)
    config, state = load_latest_checkpoint(run_dir)
    if backend is None:
        backend = make_backend(config, run_dir)
    backend.set_state(state.backend_state)
    runner = _Run(config, run_dir, backend, state)
    try:
        runner._open_event_log()
        if state.epoch >= config.epochs:
            return runner.summary(finished=True)
        return runner.run_epochs(stop_after_epoch=stop_after_epoch)
    finally:
        runner.close()


def load_latest_checkpoint(run_dir: Path) -> tuple[RunConfig, RunState]:
    ckpts = sorted((run_dir / "checkpoints").glob("epoch_*.ckpt"))
    if not ckpts:
        raise CheckpointError(f"no checkpoints in {run_dir}")
    return load_checkpoint(ckpts[-1])


def load_checkpoint(path: Path) -> tuple[RunConfig, RunState]:
    blob = path.read_bytes()
    sep = blob.find(b"\n")
    if sep != 64:
        raise CheckpointError(f"checkpoint {path} is malformed")
    digest, payload = blob[:sep], blob[sep + 1:]
    if hashlib.sha256(payload).hexdigest().encode("ascii") != digest:
        raise CheckpointError(f"checkpoint {path} failed its integrity check")
    doc = pickle.loads(payload)
    return doc["config"], doc["state"]


def _write_config_snapshot(config: RunConfig, run_dir: Path) -> None:
    doc = {
        "problem_id": config.problem_id,
        "num_islands": config.num_islands,
        "topology": config.topology if isinstance(config.topology, str) else [list(e) for e in config.topology],
        "migration_every": config.migration_every,
        "migration_rate": config.migration_rate,
        "p_explore": config.p_explore,
        "max_population": config.max_population,
        "init_population": config.init_population,
        "num_inspirations": config.num_inspirations,
        "max_ancestor_depth": config.max_ancestor_depth,
        "epochs": config.epochs,
        "master_seed": config.master_seed,
        "backend": config.backend,
        "ablation": {
            "meta_prompting": config.ablation.meta_prompting,
            "inspirations": config.ablation.inspirations,
            "evolution": config.ablation.evolution,
        },
        "limits": {
            "wall_seconds": config.limits.wall_seconds,
            "memory_bytes": config.limits.memory_bytes,
        },
    }
    (run_dir / CONFIG_SNAPSHOT_NAME).write_text(
        yaml.safe_dump(doc, sort_keys=True), encoding="utf-8"
    )
