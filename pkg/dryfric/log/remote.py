# -*- coding: utf-8 -*-
# Copyright (c) 2016, French National Center for Scientific Research (CNRS)
# Distributed under the (new) BSD License. See LICENSE for more info.
"""Forwarding of log records from worker processes to the parent process.

A worker attaches a :class:`LogSender` (zmq PUSH) to its root logger and the
parent runs a :class:`LogServer` thread (zmq PULL) that re-emits every record
through a local logger. Records travel as JSON dicts, tagged with the host
and worker name, so a record from any worker can be rebuilt with
`logging.makeLogRecord`.
"""
import os
import json
import atexit
import socket
import logging
import threading

import zmq


logger = logging.getLogger(__name__)
logger.propagate = False

_host_name = socket.gethostname()
_process_name = "process-%d" % os.getpid()

# process-wide forwarding state
_server = None
_sender = None
_forward_addr = None


def get_host_name():
    return _host_name


def get_process_name():
    return _process_name


def set_process_name(name):
    """Name this process in forwarded records (workers use their worker name)."""
    global _process_name
    _process_name = name


def get_thread_name(tid=None):
    """Name of the thread with ident *tid* (default: the calling thread)."""
    if tid is None:
        return threading.current_thread().name
    for thread in threading.enumerate():
        if thread.ident == tid:
            return thread.name
    return 'thread-%x' % tid


def record_to_json(record):
    """Encode *record* as JSON bytes with its message already formatted."""
    rec = dict(record.__dict__)
    rec['msg'] = record.getMessage()
    rec['args'] = None
    if rec.get('exc_info'):
        rec['exc_text'] = logging.Formatter().formatException(rec['exc_info'])
    rec['exc_info'] = None
    rec['host_name'] = _host_name
    rec['process_name'] = _process_name
    rec.setdefault('thread_name', rec.get('threadName'))
    return json.dumps(rec, default=str).encode('utf-8')


class LogSender(logging.Handler):
    """Handler that pushes records to a LogServer.

    Parameters
    ----------
    address : str | bytes | None
        Address of the LogServer. Records are dropped until `connect()`.
    logger : str | Logger | None
        Logger to attach to ('' is the root logger).
    """
    def __init__(self, address=None, logger=None):
        logging.Handler.__init__(self)
        self.socket = None
        if address is not None:
            self.connect(address)
        if isinstance(logger, str):
            logger = logging.getLogger(logger)
        if logger is not None:
            logger.addHandler(self)
        atexit.register(self.close)

    def connect(self, address):
        if isinstance(address, str):
            address = address.encode()
        self.socket = zmq.Context.instance().socket(zmq.PUSH)
        self.socket.linger = 1000
        self.socket.connect(address)

    def handle(self, record):
        if self.socket is not None:
            self.socket.send(record_to_json(record))

    def close(self):
        # a socket left open at interpreter exit can hang the process
        if self.socket is not None:
            self.socket.close()
            self.socket = None
        logging.Handler.close(self)


class LogServer(threading.Thread):
    """Thread that receives forwarded records and hands them to *logger*."""
    def __init__(self, logger, address='tcp://127.0.0.1:*'):
        threading.Thread.__init__(self, daemon=True, name='log-server')
        self.logger = logger
        self.running = True
        self.socket = zmq.Context.instance().socket(zmq.PULL)
        self.socket.linger = 1000
        self.socket.bind(address)
        self.address = self.socket.last_endpoint

    def stop(self):
        self.running = False

    def run(self):
        poller = zmq.Poller()
        poller.register(self.socket, zmq.POLLIN)
        while self.running:
            if self.socket not in dict(poller.poll(200)):
                continue
            fields = json.loads(self.socket.recv())
            self.logger.handle(logging.makeLogRecord(fields))
        self.socket.close()


def start_log_server(logger):
    """Start the process-wide LogServer feeding *logger* (name or Logger).

    Workers started afterwards forward to it through `get_logger_address()`.
    """
    global _server
    if _server is not None:
        raise RuntimeError("a LogServer is already running in this process")
    if isinstance(logger, str):
        logger = logging.getLogger(logger)
    _server = LogServer(logger)
    _server.start()
    return _server


def get_logger_address():
    """Address records should be forwarded to: this process's LogServer, or
    the address given to `set_logger_address()`, or None.
    """
    if _server is not None:
        return _server.address
    return _forward_addr


def set_logger_address(address):
    """Forward every record of the root logger to the LogServer at *address*."""
    global _sender, _forward_addr
    if _sender is not None:
        raise RuntimeError("records are already forwarded to %s" % _forward_addr)
    _sender = LogSender(address, '')
    _forward_addr = address
