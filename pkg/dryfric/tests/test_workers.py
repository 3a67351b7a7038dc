import os
import threading

import numpy as np
import pytest

from dryfric.model import ModelParams
from dryfric.simulate import (SimConfig, euler_maruyama_ensemble, brownian_ensemble_with_functionals,
                              simulate_block, BLOCK_PATHS)
from dryfric.workers import (start_worker, WorkerPool, TaskServer, TaskClient,
                             RemoteCallException)


def assert_pid_dead(pid):
    with pytest.raises(ProcessLookupError):
        os.kill(pid, 0)


def test_ping_and_stop():
    worker = start_worker(name='test-ping')
    pid = worker.pid
    try:
        assert worker.client.ping() == 'pong'
        assert worker.poll() is None
        assert worker.stop() == 0
    finally:
        worker.kill()
    assert_pid_dead(pid)


def test_kill():
    worker = start_worker(name='test-kill')
    pid = worker.pid
    worker.kill()
    assert worker.poll() is not None
    assert_pid_dead(pid)


def test_remote_block_matches_local():
    params = ModelParams(alpha=1.0, a=0.3, delta=1.0, diffusion=1.0)
    worker = start_worker(name='test-block')
    try:
        result = worker.client.run('euler_blocks', timeout=30, params=params.to_dict(), v0=0.2,
                                   n_steps=50, dt=0.01, seed=5, blocks=[2], sizes=[300])
    finally:
        worker.stop()
    (block, remote), = result
    assert block == 2
    local = simulate_block(params, 0.2, 50, 0.01, 5, 2, 300)
    assert remote['terminal'].tobytes() == local['terminal'].tobytes()


def test_unknown_task_is_refused():
    worker = start_worker(name='test-refuse')
    try:
        with pytest.raises(RemoteCallException) as exc:
            worker.client.run('os.system', command='true')
        assert exc.value.type_str == 'ValueError'
        # the server keeps serving after an error
        assert worker.client.ping() == 'pong'
    finally:
        worker.stop()


def test_remote_error_carries_traceback():
    worker = start_worker(name='test-error')
    try:
        with pytest.raises(RemoteCallException) as exc:
            worker.client.run('euler_blocks', params=None, v0=0.0, n_steps=1, dt=0.1, seed=0,
                              blocks=[0], sizes=[BLOCK_PATHS + 1])
        assert exc.value.type_str == 'ParameterError'
        assert 'n_in_block' in ''.join(exc.value.tb_str)
    finally:
        worker.stop()


def test_in_process_server():
    server = TaskServer(tasks={'add': lambda x, y: x + y})
    thread = threading.Thread(target=server.run_forever, daemon=True)
    thread.start()
    client = TaskClient(server.address)
    assert client.ping() == 'pong'
    assert client.run('add', x=2, y=3) == 5
    fut = client.run('add', sync='async', x=(1,), y=(2,))
    assert fut.result(timeout=5) == (1, 2)
    assert client.close_server() is True
    thread.join(timeout=5)
    assert not thread.is_alive()
    assert not server.running()


def test_pool_rejects_bad_size():
    with pytest.raises(ValueError):
        WorkerPool(0)


def test_ensemble_independent_of_worker_count():
    params = ModelParams(alpha=0.5, a=-0.2, delta=1.0, diffusion=0.8)
    cfg = SimConfig(params=params, v0=-0.3, t_final=0.2, dt=0.01,
                    n_paths=2 * BLOCK_PATHS + 10, seed=11, record_functionals=True)
    serial = euler_maruyama_ensemble(cfg, workers=0)
    parallel = euler_maruyama_ensemble(cfg, workers=2)
    assert serial.terminal.tobytes() == parallel.terminal.tobytes()
    assert serial.functionals.l_t.tobytes() == parallel.functionals.l_t.tobytes()
    assert serial.functionals.l_t_bridge.tobytes() == parallel.functionals.l_t_bridge.tobytes()


def test_pool_results_keyed_by_block():
    params = ModelParams(alpha=0.0, a=0.0, delta=1.0, diffusion=1.0).to_dict()
    with WorkerPool(2) as pool:
        results = pool.run_blocks('euler_blocks', [0, 1, 2], [10, 20, 30], params=params,
                                  v0=0.0, n_steps=5, dt=0.1, seed=1)
        assert len(pool.workers) == 2
    assert sorted(results) == [0, 1, 2]
    assert [len(results[b]['terminal']) for b in range(3)] == [10, 20, 30]
    assert pool.workers == []
    for b in range(3):
        local = simulate_block(params, 0.0, 5, 0.1, 1, b, [10, 20, 30][b])
        assert np.array_equal(results[b]['terminal'], local['terminal'])


def test_brownian_ensemble_independent_of_worker_count():
    n = BLOCK_PATHS + 5
    serial = brownian_ensemble_with_functionals(0.4, 0.1, 0.01, n, seed=3, workers=0)
    parallel = brownian_ensemble_with_functionals(0.4, 0.1, 0.01, n, seed=3, workers=2)
    assert parallel.config.params is None
    assert serial.terminal.tobytes() == parallel.terminal.tobytes()
    assert serial.functionals.occupation.tobytes() == parallel.functionals.occupation.tobytes()
    assert serial.functionals.l_t_bridge.tobytes() == parallel.functionals.l_t_bridge.tobytes()
