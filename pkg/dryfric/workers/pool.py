# -*- coding: utf-8 -*-
# Distributed under the (new) BSD License. See LICENSE for more info.

import logging

from .process import start_worker


logger = logging.getLogger(__name__)


class WorkerPool(object):
    """A fixed set of worker processes that run path blocks in parallel.

    Blocks are dealt out round-robin and results come back keyed by block
    index, so what a caller assembles never depends on the number of workers
    or on which finished first.

    Use as a context manager::

        with WorkerPool(4) as pool:
            results = pool.run_blocks('euler_blocks', blocks, sizes, **opts)
    """
    def __init__(self, n_workers, log_addr=None, log_level=None, serializer='msgpack'):
        if int(n_workers) != n_workers or n_workers < 1:
            raise ValueError("n_workers must be an integer >= 1; got %r" % (n_workers,))
        self.n_workers = int(n_workers)
        self.log_addr = log_addr
        self.log_level = log_level
        self.serializer = serializer
        self.workers = []

    def start(self):
        for i in range(self.n_workers - len(self.workers)):
            self.workers.append(start_worker(name='worker-%d' % len(self.workers),
                                             log_addr=self.log_addr, log_level=self.log_level,
                                             serializer=self.serializer))
        return self

    def close(self):
        while self.workers:
            worker = self.workers.pop()
            try:
                worker.stop()
            except Exception:
                logger.warning("worker %s did not stop cleanly; killing it", worker.name, exc_info=True)
                worker.kill()

    def __enter__(self):
        try:
            return self.start()
        except Exception:
            self.close()
            raise

    def __exit__(self, exc_type, exc, tb):
        self.close()

    def run_blocks(self, task, blocks, sizes, **opts):
        """Run *task* over (block, size) pairs; returns {block: result}.

        Each worker receives one request covering every n-th block. *opts*
        are passed to the task as keyword arguments together with its
        ``blocks`` and ``sizes``.
        """
        if not self.workers:
            self.start()
        blocks = list(blocks)
        sizes = list(sizes)
        if len(blocks) != len(sizes):
            raise ValueError("blocks and sizes differ in length")
        n = len(self.workers)
        futures = []
        for i, worker in enumerate(self.workers):
            mine = blocks[i::n]
            if not mine:
                continue
            kwargs = dict(opts, blocks=mine, sizes=sizes[i::n])
            futures.append(worker.client.run(task, sync='async', **kwargs))
        results = {}
        for fut in futures:
            for block, result in fut.result():
                results[int(block)] = result
        logger.debug("collected %d blocks from %d workers", len(results), len(futures))
        return results
