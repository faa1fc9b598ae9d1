# services/background_tasks.py

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

from utils.config_utils import get_thread_cap

T = TypeVar("T")
R = TypeVar("R")


def run_per_subject(
    fn: Callable[[T], R],
    items: Sequence[T],
    threads: Optional[int] = None,
    label: Optional[Callable[[T], str]] = None,
) -> List[R]:
    """Run fn over items on a bounded thread pool; results keep the input order.

    Subjects are independent, so the result never depends on the worker count.
    The first failure (in input order) is reported and re-raised.
    """
    items = list(items)
    if not items:
        return []
    workers = min(get_thread_cap(threads), len(items))
    name = label or str

    if workers <= 1:
        results = []
        for item in items:
            try:
                results.append(fn(item))
            except Exception as e:
                print(f"❌ Error processing {name(item)}: {e}")
                raise
        return results

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, item) for item in items]
        results = []
        for item, future in zip(items, futures):
            try:
                results.append(future.result())
            except Exception as e:
                print(f"❌ Error processing {name(item)}: {e}")
                for pending in futures:
                    pending.cancel()
                raise
    return results
