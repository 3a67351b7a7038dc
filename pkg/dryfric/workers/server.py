# -*- coding: utf-8 -*-
# Copyright (c) 2016, French National Center for Scientific Research (CNRS)
# Distributed under the (new) BSD License. See LICENSE for more info.

import sys
import atexit
import traceback
import logging
import zmq

from .. import serializer
from .. import log


logger = logging.getLogger(__name__)


def _task_registry():
    from .. import simulate
    return {
        'euler_blocks': simulate.euler_blocks,
        'brownian_blocks': simulate.brownian_blocks,
    }


class TaskServer(object):
    """Request loop of a worker process.

    A TaskServer binds a zmq ROUTER socket and serves three actions:

    ======== =========================================== =========================
    Action   Description                                 Options
    -------- ------------------------------------------- -------------------------
    ping     Return 'pong'
    run      Call a registered task, return its result   | task: registered name
                                                         | kwargs: keyword arguments
    close    Stop serving; other clients are told the
             server disconnected
    ======== =========================================== =========================

    Only functions in the task registry can be run; requests carry plain data
    only (see `dryfric.serializer`). The server is not meant to be exposed
    beyond localhost.

    Parameters
    ----------
    address : str
        Address to bind. Default is ``'tcp://127.0.0.1:*'``.
    tasks : dict | None
        {name: callable}; defaults to the simulation block tasks.
    """
    def __init__(self, address="tcp://127.0.0.1:*", tasks=None):
        self._socket = zmq.Context.instance().socket(zmq.ROUTER)
        self._socket.linger = 5000
        self._socket.bind(address)
        self.address = self._socket.getsockopt(zmq.LAST_ENDPOINT)
        self._closed = False

        self._serializers = {}
        for ser in serializer.all_serializers.values():
            self._serializers[ser.type] = ser()

        self._clients = {}  # {socket_id: serializer_type}
        self.tasks = _task_registry() if tasks is None else dict(tasks)

        atexit.register(self._atexit)

    def __repr__(self):
        return "<TaskServer %s>" % self.address.decode()

    @staticmethod
    def _read_one(socket):
        name, req_id, action, ser_type, opts = socket.recv_multipart()
        msg = {
            'req_id': int(req_id),
            'action': action.decode(),
            'ser_type': ser_type.decode(),
            'opts': opts,
        }
        return name, msg

    def _process_one(self, caller, msg):
        """Invoke the requested action and send back its result or error."""
        ser_type = msg['ser_type']
        action = msg['action']
        req_id = msg['req_id']
        self._clients[caller] = ser_type

        try:
            try:
                ser = self._serializers[ser_type]
            except KeyError:
                raise ValueError("Unsupported serializer '%s'" % ser_type)
            opts = msg['opts']
            opts = None if opts == b'' else ser.loads(opts)
            logger.debug("task recv '%s' from %s [req_id=%s]", action, caller.decode(), req_id)
            result = self.process_action(action, opts, caller)
            exc = None
        except Exception:
            exc = sys.exc_info()

        if req_id >= 0:
            if exc is None:
                try:
                    self._send_result(caller, req_id, rval=result)
                except Exception:
                    logger.warning("    => failed to send result for %d", req_id)
                    self._send_error(caller, req_id, sys.exc_info())
            else:
                logger.warning("    => returning exception for %d: %s", req_id, exc[1])
                self._send_error(caller, req_id, exc)
        elif exc is not None:
            sys.excepthook(*exc)

        if action == 'close':
            self._socket.close()

    def _send_error(self, caller, req_id, exc):
        exc_str = ["Error while processing request %s [%d]: \n" % (caller.decode(), req_id)]
        exc_str += traceback.format_exception(*exc)
        self._send_result(caller, req_id, error=[exc[0].__name__, exc_str])

    def _send_result(self, caller, req_id, rval=None, error=None):
        result = {'action': 'return', 'req_id': req_id, 'rval': rval, 'error': error}
        ser = self._serializers[self._clients[caller]]
        self._socket.send_multipart([caller, ser.dumps(result)])

    def process_action(self, action, opts, caller):
        if action == 'ping':
            return 'pong'
        elif action == 'run':
            name = opts['task']
            try:
                task = self.tasks[name]
            except KeyError:
                raise ValueError("Unknown task '%s'; available: %s" % (name, sorted(self.tasks)))
            kwargs = opts.get('kwargs') or {}
            logger.info("run task %s %s", name, {k: v for k, v in kwargs.items() if k == 'blocks'})
            return task(**kwargs)
        elif action == 'close':
            self._closed = True
            data = {}
            for client, ser_type in self._clients.items():
                if client == caller:
                    continue
                if ser_type not in data:
                    data[ser_type] = self._serializers[ser_type].dumps({'action': 'disconnect'})
                logger.debug("task server sending disconnect message to %r", client)
                self._socket.send_multipart([client, data[ser_type]])
            return True
        raise ValueError("Invalid action '%s'" % action)

    def _atexit(self):
        if self._closed is not True:
            logger.warning("TaskServer exiting without close()!")
            self._closed = True
            self._socket.close()

    def running(self):
        return self._closed is False

    def run_forever(self):
        """Read and process requests until a client asks the server to close."""
        name = '%s.%s.%s' % (log.get_host_name(), log.get_process_name(), log.get_thread_name())
        logger.info("task server start: %s@%s", name, self.address.decode())
        while self.running():
            name, msg = self._read_one(self._socket)
            self._process_one(name, msg)
