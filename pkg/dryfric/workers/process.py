# -*- coding: utf-8 -*-
# Copyright (c) 2016, French National Center for Scientific Research (CNRS)
# Distributed under the (new) BSD License. See LICENSE for more info.

import sys
import json
import subprocess
import atexit
import threading
import time
import logging
import zmq

from .client import TaskClient
from ..log import get_logger_address


logger = logging.getLogger(__name__)

BOOTSTRAP_TIMEOUT = 10.0


def start_worker(name=None, log_addr=None, log_level=None, serializer='msgpack',
                 executable=None):
    """Spawn a worker process running a :class:`TaskServer` and connect to it.

    Parameters
    ----------
    name : str | None
        Process name attached to the worker's log records.
    log_addr : str | bytes | None
        LogServer address that the worker forwards its log records to. Its
        stdout and stderr are then captured and logged as well. Defaults to
        the LogServer of this process, if one is running.
    log_level : int | None
        Root log level in the worker (default: this process's effective level).
    serializer : str
        Wire format for requests and replies.
    executable : str | None
        Python executable (default `sys.executable`).

    Returns
    -------
    WorkerProcess

    Raises TimeoutError if the worker does not report its address within
    BOOTSTRAP_TIMEOUT seconds.
    """
    assert name is None or isinstance(name, str)
    if log_addr is None:
        log_addr = get_logger_address()
    if isinstance(log_addr, bytes):
        log_addr = log_addr.decode()
    if log_level is None:
        log_level = logging.getLogger().getEffectiveLevel()

    # temporary socket on which the worker reports its server address
    bootstrap_sock = zmq.Context.instance().socket(zmq.PAIR)
    bootstrap_sock.setsockopt(zmq.RCVTIMEO, int(BOOTSTRAP_TIMEOUT * 1000))
    bootstrap_sock.bind('tcp://127.0.0.1:*')
    bootstrap_sock.linger = 1000
    bootstrap_addr = bootstrap_sock.last_endpoint

    bootstrap_conf = dict(
        bootstrap_addr=bootstrap_addr.decode(),
        loglevel=log_level,
        logaddr=log_addr,
    )
    cmd = (executable or sys.executable, '-m', 'dryfric.workers.bootstrap')
    if name is not None:
        cmd = cmd + (name,)

    if log_addr is not None:
        proc = subprocess.Popen(cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                stderr=subprocess.PIPE)
        child_logger = logging.getLogger('%s.%s' % (__name__, name or proc.pid))
        pollers = (PipePoller(proc.stdout, child_logger.info, '[%s.stdout] ' % name),
                   PipePoller(proc.stderr, child_logger.warning, '[%s.stderr] ' % name))
    else:
        proc = subprocess.Popen(cmd, stdin=subprocess.PIPE)
        pollers = ()
    proc.stdin.write(json.dumps(bootstrap_conf).encode())
    proc.stdin.close()
    logger.info("spawned worker %s: pid %d", name, proc.pid)

    try:
        status = bootstrap_sock.recv_json()
    except zmq.error.Again:
        proc.kill()
        raise TimeoutError("Timed out waiting for response from worker process.")
    logger.debug("recv status %s", status)
    bootstrap_sock.send(b'OK')
    bootstrap_sock.close()

    if 'address' not in status:
        if proc.poll() is None:
            proc.kill()
        raise RuntimeError("Error while starting worker:\n%s" % ''.join(status['error']))

    client = TaskClient(status['address'], serializer=serializer)
    return WorkerProcess(proc, client, name, pollers)


class WorkerProcess(object):
    """Handle on a spawned worker: its `client` plus process control."""
    def __init__(self, proc, client, name, pollers=()):
        self.proc = proc
        self.client = client
        self.name = name
        self.pollers = pollers
        # shut the worker down when this process exits
        atexit.register(self.stop)

    def __repr__(self):
        return "<WorkerProcess %s pid=%d>" % (self.name, self.pid)

    @property
    def pid(self):
        return self.proc.pid

    def wait(self, timeout=10):
        """Wait for the process to exit and return its return code."""
        # pipes captured for logging are drained by the pollers
        start = time.time()
        sleep = 1e-3
        while True:
            rcode = self.proc.poll()
            if rcode is not None:
                return rcode
            if time.time() - start > timeout:
                raise TimeoutError("Timed out waiting on process exit for %s" % self.name)
            time.sleep(sleep)
            sleep = min(sleep * 2, 100e-3)

    def kill(self):
        """Kill the worker immediately."""
        if self.proc.poll() is not None:
            return
        logger.info("kill worker: %d", self.proc.pid)
        self.proc.kill()
        self.wait()

    def stop(self):
        """Ask the worker's server to close, then wait; returns the exit code."""
        if self.proc.poll() is not None:
            return self.proc.poll()
        logger.info("close worker: %s", self.client.address.decode())
        closed = self.client.close_server()
        assert closed is True, "Server refused to close. (reply: %r)" % (closed,)
        self.client.close()
        return self.wait()

    def poll(self):
        """Return code of the worker, or None while it runs."""
        return self.proc.poll()


class PipePoller(threading.Thread):
    """Thread turning lines read from *pipe* into log calls."""
    def __init__(self, pipe, callback, prefix):
        threading.Thread.__init__(self, daemon=True)
        self.pipe = pipe
        self.callback = callback
        self.prefix = prefix
        self.start()

    def run(self):
        while True:
            line = self.pipe.readline().decode()
            if line == '':
                break
            self.callback(self.prefix + line.rstrip('\n'))
