from typing import Dict, List

from fastapi import APIRouter, Depends, HTTPException, status
from starlette.concurrency import run_in_threadpool

from app.api.dependencies import get_corpus_registry, get_experiment_service
from app.core.errors import (
    DesignError, InvalidInputError, LipschitzValidityError, ScenarioConfigError, SimulationAbort, ToolkitError,
)
from app.core.logger import logger
from app.models.schemas import DesignReportModel, DesignRequest, ScenarioInfo, SimulationRequest, SimulationSummary
from app.services.corpus import Scenario
from app.services.experiments import ExperimentService

router = APIRouter(tags=["Event-Triggered Control"])


def _to_http(exc: ToolkitError) -> HTTPException:
    if isinstance(exc, (ScenarioConfigError, InvalidInputError)):
        return HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_CONTENT, detail=str(exc))
    if isinstance(exc, (DesignError, LipschitzValidityError)):
        return HTTPException(status_code=status.HTTP_409_CONFLICT, detail=str(exc))
    if isinstance(exc, SimulationAbort):
        return HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail={"error": type(exc).__name__, "message": str(exc), "t": exc.t},
        )
    return HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=str(exc))


@router.get(
    "/scenarios",
    response_model=List[ScenarioInfo],
    summary="List Corpus Scenarios",
    description="Built-in closed loops with their rule variants, invariant-set radius, admissibility bound Q and L2 gain."
)
async def list_scenarios(corpus: Dict[str, Scenario] = Depends(get_corpus_registry)) -> List[ScenarioInfo]:
    return [scenario.info() for scenario in corpus.values()]


@router.post(
    "/simulate",
    response_model=SimulationSummary,
    summary="Simulate Event-Triggered Loop",
    description="Runs one corpus scenario under the chosen triggering rule and returns event statistics and verdicts."
)
async def simulate_scenario(
    request: SimulationRequest,
    service: ExperimentService = Depends(get_experiment_service)
) -> SimulationSummary:
    logger.info(f"Simulation requested: {request.scenario}/{request.rule.variant} t_end={request.t_end:g}")

    # CPU-bound; keep the event loop free
    try:
        return await run_in_threadpool(service.summarize, request)
    except ToolkitError as e:
        logger.error(f"Simulation failed: {type(e).__name__}: {e}")
        raise _to_http(e)


@router.post(
    "/design",
    response_model=DesignReportModel,
    summary="Design Decaying Trigger",
    description="Computes the inter-event bound tau and the decay amplitudes kappa / kappa_hat from Lipschitz data."
)
async def design_trigger(
    request: DesignRequest,
    service: ExperimentService = Depends(get_experiment_service)
) -> DesignReportModel:
    try:
        return service.design(request.inputs, request.mode).to_model()
    except ToolkitError as e:
        raise _to_http(e)


@router.get(
    "/design/{scenario}",
    response_model=DesignReportModel,
    summary="Design From Corpus Fixture",
    description="Runs the design procedure on a corpus scenario's published constants."
)
async def design_for_scenario(
    scenario: str,
    corpus: Dict[str, Scenario] = Depends(get_corpus_registry),
    service: ExperimentService = Depends(get_experiment_service)
) -> DesignReportModel:
    if scenario not in corpus:
        raise HTTPException(status_code=404, detail=f"unknown scenario '{scenario}'")
    inputs = corpus[scenario].design_inputs
    if inputs is None:
        raise HTTPException(status_code=404, detail=f"scenario '{scenario}' carries no design inputs")
    try:
        return service.design(inputs).to_model()
    except ToolkitError as e:
        raise _to_http(e)
