from typing import Dict

from app.services.corpus import Scenario, registry
from app.services.experiments import ExperimentService

# Global singletons
_experiment_service_instance = None
_corpus_instance = None


def get_experiment_service() -> ExperimentService:
    global _experiment_service_instance
    if not _experiment_service_instance:
        _experiment_service_instance = ExperimentService()
    return _experiment_service_instance


def get_corpus_registry() -> Dict[str, Scenario]:
    """Corpus scenarios built once with their published parameters."""
    global _corpus_instance
    if not _corpus_instance:
        _corpus_instance = {name: build() for name, build in registry().items()}
    return _corpus_instance
