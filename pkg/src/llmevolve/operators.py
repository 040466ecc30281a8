"""Variation operators: depth exploitation, meta-prompting exploration.

A step first flips the explore coin, then samples a parent, optional
inspirations and the ancestor chain, asks the generation engine for an edit,
and applies it with the diff engine. All state mutation beyond id allocation
and prompt-pool insertion is left to the engine.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from . import diffengine, llm, selection
from .config import RunConfig
from .core import (
    STATUS_GENERATION_FAILED,
    STATUS_PENDING,
    IslandState,
    Prompt,
    Solution,
)

OP_EXPLOIT = "exploit"
OP_EXPLORE = "explore"


@dataclass
class IslandRngs:
    """Independent random substreams for one island."""

    coin: random.Random
    select: random.Random
    model: random.Random


@dataclass
class OperatorOutcome:
    new_solution: Solution
    new_prompt: Optional[Prompt]
    operator: str
    model_used: str
    inspiration_ids: list[str] = field(default_factory=list)


def gate_crossover(first_migration_done: bool, inspirations_enabled: bool) -> bool:
    """Inspiration-based crossover only runs once a migration has happened."""
    return first_migration_done and inspirations_enabled


def _resolve_prompt(island: IslandState, sol: Solution) -> Prompt:
    if sol.parent_prompt_id is None:
        raise RuntimeError(f"solution {sol.id} has no parent prompt")
    return island.lookup_prompt(sol.parent_prompt_id)


def _failed_solution(
    island: IslandState,
    epoch: int,
    parent: Solution,
    prompt_id: Optional[str],
    reason: str,
) -> Solution:
    # The failed record keeps the parent's code so it stays executable if it
    # ever enters a below-capacity population.
    return Solution(
        id=island.next_solution_id(),
        island_id=island.id,
        code=parent.code,
        parent_id=parent.id,
        parent_prompt_id=prompt_id,
        epoch_created=epoch,
        fitness=0.0,
        status=STATUS_GENERATION_FAILED,
        origin_island=island.id,
        feedback=reason,
    )


def evolve_step(
    island: IslandState,
    config: RunConfig,
    backend,
    problem_brief: str,
    crossover_enabled: bool,
    rngs: IslandRngs,
    epoch: int,
) -> OperatorOutcome:
    """Run one exploitation or exploration step on one island."""
    population = island.live()
    if not population:
        raise RuntimeError(f"island {island.id} has an empty population")

    p = rngs.coin.random()
    explore = p >= 1.0 - config.p_explore and config.ablation.meta_prompting
    ensemble = config.ensemble

    if not explore:
        parent = island.lookup(selection.rank_sample(population, rngs.select))
        prompt = _resolve_prompt(island, parent)
        inspiration_ids = (
            selection.sample_inspirations(
                population, parent.id, config.num_inspirations, "rank", rngs.select
            )
            if crossover_enabled
            else []
        )
        ancestors = island.ancestors(parent.id, config.max_ancestor_depth)
        new_prompt = None
        operator = OP_EXPLOIT
    else:
        parent = island.lookup(selection.uniform_sample(population, rngs.select))
        prompt_for_meta = _resolve_prompt(island, parent)
        try:
            new_text = llm.meta_prompt(
                ensemble,
                prompt_for_meta.text,
                parent.code,
                backend,
                island_id=island.id,
                problem_brief=problem_brief,
            )
        except (llm.TransportError, llm.EmptyResponseError) as exc:
            failed = _failed_solution(
                island, epoch, parent, prompt_for_meta.id, f"meta-prompting failed: {exc}"
            )
            return OperatorOutcome(failed, None, OP_EXPLORE, model_used="")
        new_prompt = Prompt(
            id=island.next_prompt_id(),
            text=new_text,
            island_id=island.id,
            parent_solution_id=parent.id,
            epoch_created=epoch,
        )
        # Inserted into the pool regardless of whether the offspring below
        # succeeds, so its fitness starts at 0 per the empty-max convention.
        island.add_prompt(new_prompt)
        prompt = new_prompt
        inspiration_ids = (
            selection.sample_inspirations(
                population, parent.id, config.num_inspirations, "uniform", rngs.select
            )
            if crossover_enabled
            else []
        )
        ancestors = []  # lineage deliberately withheld on exploration
        operator = OP_EXPLORE

    request = llm.GenerationRequest(
        prompt_text=prompt.text,
        parent_code=parent.code,
        ancestor_codes=[a.code for a in ancestors],
        inspiration_codes=[island.lookup(i).code for i in inspiration_ids],
        execution_feedback=parent.feedback,
        problem_brief=problem_brief,
    )
    try:
        model, response = llm.generate(
            ensemble, request, backend, rngs.model, island_id=island.id
        )
        code = _apply_response(parent.code, response)
    except (llm.TransportError, diffengine.DiffParseError, diffengine.DiffApplyError) as exc:
        failed = _failed_solution(
            island, epoch, parent, prompt.id, f"generation failed: {exc}"
        )
        return OperatorOutcome(failed, new_prompt, operator, model_used="", inspiration_ids=inspiration_ids)

    new_solution = Solution(
        id=island.next_solution_id(),
        island_id=island.id,
        code=code,
        parent_id=parent.id,
        parent_prompt_id=prompt.id,
        epoch_created=epoch,
        status=STATUS_PENDING,
        origin_island=island.id,
    )
    return OperatorOutcome(
        new_solution, new_prompt, operator, model_used=model, inspiration_ids=inspiration_ids
    )


def _apply_response(parent_code: str, response: str) -> str:
    parsed = diffengine.parse_response(response)
    if parsed.kind == "blocks":
        return diffengine.apply_blocks(parent_code, parsed.blocks)
    if parsed.kind == "full":
        return parsed.full_replacement or ""
    raise diffengine.DiffParseError("response contains no edit blocks or code block")


def initialize_island(
    island: IslandState,
    config: RunConfig,
    backend,
    problem_brief: str,
    trivial_code: str,
    rngs: IslandRngs,
) -> tuple[Prompt, list[Solution], list[Solution]]:
    """Seed an empty island from the initial prompt/solution pair.

    Returns (initial prompt, pending root solutions, failed generations).
    The trivial program is always the first pending root; each successful
    independent generation adds another root. Failures carry fitness 0 and
    are recorded but never become roots.
    """
    if island.solutions:
        raise RuntimeError(f"island {island.id} is already initialized")
    initial_prompt = Prompt(
        id=island.next_prompt_id(),
        text=problem_brief,
        island_id=island.id,
        epoch_created=0,
    )
    island.add_prompt(initial_prompt)

    def _root(code: str) -> Solution:
        return Solution(
            id=island.next_solution_id(),
            island_id=island.id,
            code=code,
            parent_id=None,
            parent_prompt_id=initial_prompt.id,
            epoch_created=0,
            status=STATUS_PENDING,
            origin_island=island.id,
        )

    pending = [_root(trivial_code)]
    failures: list[Solution] = []
    request = llm.GenerationRequest(
        prompt_text=initial_prompt.text,
        parent_code=trivial_code,
        problem_brief=problem_brief,
    )
    for _ in range(config.init_population):
        try:
            _, response = llm.generate(
                config.ensemble, request, backend, rngs.model, island_id=island.id
            )
            code = _apply_response(trivial_code, response)
            pending.append(_root(code))
        except (llm.TransportError, diffengine.DiffParseError, diffengine.DiffApplyError) as exc:
            failed = Solution(
                id=island.next_solution_id(),
                island_id=island.id,
                code="",
                parent_id=None,
                parent_prompt_id=initial_prompt.id,
                epoch_created=0,
                fitness=0.0,
                status=STATUS_GENERATION_FAILED,
                origin_island=island.id,
                feedback=f"initialization generation failed: {exc}",
            )
            failures.append(failed)
    return initial_prompt, pending, failures
