from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar("T")
R = TypeVar("R")


class TaskPool:
    """
    Ordered parallel map over independent work items (targets, samples).

    Results always come back in input order, so outputs do not depend on the
    worker count. The worker cap is global and set once by the CLI `--threads`
    flag; a cap of 1 runs everything inline.

    Methods
    -------
    set_max_workers(n)
        Cap the number of worker threads.
    map(fn, items)
        Apply `fn` to every item and return the results in order.
    """

    _max_workers: int = 1

    @staticmethod
    def set_max_workers(n: int) -> None:
        if n < 1:
            raise ValueError("Worker count must be >= 1")
        TaskPool._max_workers = int(n)

    @staticmethod
    def max_workers() -> int:
        return TaskPool._max_workers

    @staticmethod
    def map(fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """
        Apply `fn` to every element of `items`.

        Parameters
        ----------
        fn : Callable[[T], R]
            Pure function of one work item.
        items : Iterable[T]
            Work items.

        Returns
        -------
        List[R]
            Results in the order of `items`.
        """
        items = list(items)
        if TaskPool._max_workers == 1 or len(items) < 2:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=TaskPool._max_workers) as executor:
            return list(executor.map(fn, items))
