"""Gradient-check service over the registered finite-difference cases."""

import time

from fluxamba import gradcases  # noqa: F401  registers the cases
from fluxamba.logger import get_logger
from fluxamba.numerics.gradcheck import CaseResult, cases, check_case

logger = get_logger(__name__)


def run_gradcheck(scope: str, seed: int = 42) -> list[CaseResult]:
    """Check every case registered under `scope`.

    Raises:
        ConfigError: If the scope is unknown.
    """
    start_time = time.perf_counter()
    logger.info("running gradient checks", extra={"scope": scope})

    try:
        results = []
        for case in cases(scope):
            result = check_case(case, seed=seed)
            logger.debug(
                "gradient case checked",
                extra={"case": result.name, "max_rel_error": result.max_rel_error, "passed": result.passed},
            )
            results.append(result)

        duration = time.perf_counter() - start_time
        logger.info(
            "gradient checks finished",
            extra={
                "scope": scope,
                "cases": len(results),
                "failed": sum(not r.passed for r in results),
                "duration": f"{duration:.4f}s",
            },
        )
        return results
    except Exception as e:
        duration = time.perf_counter() - start_time
        logger.error(
            "gradient checks failed", extra={"scope": scope, "error": str(e), "duration": f"{duration:.4f}s"}
        )
        raise
