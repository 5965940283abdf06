"""Order-stable thread-pool fan-out for per-subject stages."""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, Dict, List, Optional, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)


def map_ordered(
    fn: Callable[[T], R],
    items: Sequence[T],
    workers: int = 1,
    progress: Optional[Callable[[int, int], None]] = None,
) -> List[R]:
    """Apply `fn` to every item; results come back in input order.

    With several failures the one raised belongs to the lowest input index,
    so the outcome does not depend on the pool size.
    """
    total = len(items)
    if workers <= 1 or total <= 1:
        results = []
        for done, item in enumerate(items, start=1):
            results.append(fn(item))
            if progress:
                progress(done, total)
        return results

    slots: Dict[int, R] = {}
    errors: Dict[int, BaseException] = {}
    with ThreadPoolExecutor(max_workers=min(workers, total)) as executor:
        futures = {executor.submit(fn, item): index for index, item in enumerate(items)}
        for done, future in enumerate(as_completed(futures), start=1):
            index = futures[future]
            try:
                slots[index] = future.result()
            except Exception as e:
                errors[index] = e
            if progress:
                progress(done, total)

    if errors:
        first = min(errors)
        logger.debug(f"{len(errors)} of {total} work items failed; first at index {first}")
        raise errors[first]
    return [slots[index] for index in range(total)]
