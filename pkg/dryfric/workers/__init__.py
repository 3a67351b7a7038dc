# -*- coding: utf-8 -*-
# Distributed under the (new) BSD License. See LICENSE for more info.
"""Worker processes for parallel ensemble generation.

Each worker runs a TaskServer reachable over zmq; the parent talks to it with
a TaskClient. Only registered simulation tasks can be run remotely.
"""
from .client import TaskClient, RemoteCallException, Future
from .server import TaskServer
from .process import start_worker, WorkerProcess
from .pool import WorkerPool
