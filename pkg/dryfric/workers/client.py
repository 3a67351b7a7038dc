# -*- coding: utf-8 -*-
# Copyright (c) 2016, French National Center for Scientific Research (CNRS)
# Distributed under the (new) BSD License. See LICENSE for more info.

import time
import weakref
import itertools
import concurrent.futures
import logging

import zmq

from ..serializer import all_serializers
from .. import log


logger = logging.getLogger(__name__)

_client_ids = itertools.count()

SYNC_MODES = ('sync', 'async', 'off')


class RemoteCallException(Exception):
    """An exception raised inside a worker, re-raised here.

    ``type_str`` is the remote exception's class name and ``tb_str`` the list
    of remote traceback lines.
    """
    def __init__(self, type_str, tb_str):
        Exception.__init__(self, type_str)
        self.type_str = type_str
        self.tb_str = tb_str

    def __str__(self):
        return '\n===> Remote exception was:\n' + ''.join(self.tb_str)


class Future(concurrent.futures.Future):
    """Pending reply to a request sent with ``sync='async'``.

    `result()` reads replies from the client's socket until this one is in.
    """
    def __init__(self, client, req_id):
        concurrent.futures.Future.__init__(self)
        self.client = client
        self.req_id = req_id

    def cancel(self):
        return False

    def result(self, timeout=None):
        self.client.wait_for(self, timeout=timeout)
        return concurrent.futures.Future.result(self)


class TaskClient(object):
    """Connection to one :class:`TaskServer`, for use from a single thread.

    Every request carries an integer ID; replies arrive on a DEALER socket in
    any order and are matched to their :class:`Future` by that ID.

    Parameters
    ----------
    address : str | bytes
        Address of the server.
    serializer : str
        'msgpack' (default) or 'json'.
    """
    def __init__(self, address, serializer='msgpack'):
        if isinstance(address, str):
            address = address.encode()
        self.address = address
        try:
            self.serializer = all_serializers[serializer]()
        except KeyError:
            raise ValueError("Unsupported serializer type '%s'" % serializer)
        # socket identity: host.process.thread.n:address
        self.name = ('%s.%s.%s.%d:%s' % (log.get_host_name(), log.get_process_name(),
                                         log.get_thread_name(), next(_client_ids),
                                         address.decode())).encode()

        self._socket = zmq.Context.instance().socket(zmq.DEALER)
        self._socket.setsockopt(zmq.IDENTITY, self.name)
        self._socket.linger = 1000
        self._socket.connect(address)
        logger.debug("task client %s connected", address.decode())

        self._req_ids = itertools.count()
        self._pending = weakref.WeakValueDictionary()
        self._disconnected = False

    def __repr__(self):
        return "<TaskClient %s>" % self.address.decode()

    def send(self, action, opts=None, sync='sync', timeout=10.0):
        """Send *action* ('ping', 'run' or 'close') with options *opts*.

        ``sync='sync'`` waits up to *timeout* seconds and returns the result,
        ``'async'`` returns a :class:`Future` and ``'off'`` requests no reply.
        """
        if sync not in SYNC_MODES:
            raise ValueError("sync must be one of %s; got %r" % (SYNC_MODES, sync))
        if self._disconnected:
            raise RuntimeError("server %s has disconnected" % self.address.decode())
        req_id = -1 if sync == 'off' else next(self._req_ids)
        payload = b'' if opts is None else self.serializer.dumps(opts)
        self._socket.send_multipart([str(req_id).encode(), action.encode(),
                                     self.serializer.type.encode(), payload])
        logger.debug("sent '%s' to %s [req_id=%d]", action, self.address.decode(), req_id)
        if sync == 'off':
            return None

        fut = Future(self, req_id)
        if action == 'close':
            fut.add_done_callback(self._close_returned)
        self._pending[req_id] = fut
        return fut if sync == 'async' else fut.result(timeout=timeout)

    def run(self, task, sync='sync', timeout=None, **kwargs):
        """Run the registered *task* in the worker with keyword arguments *kwargs*."""
        return self.send('run', {'task': task, 'kwargs': kwargs}, sync=sync, timeout=timeout)

    def ping(self, sync='sync', timeout=10.0):
        return self.send('ping', sync=sync, timeout=timeout)

    def disconnected(self):
        """True once the server has announced that it closed."""
        if not self._disconnected:
            self._read_available()
        return self._disconnected

    def close_server(self, timeout=1.0):
        """Ask the server to stop; True once it has."""
        if self.disconnected():
            return True
        return self.send('close', timeout=timeout)

    def close(self):
        """Close this client's socket; the server is not affected."""
        self._socket.close()

    ## Reply handling

    def wait_for(self, future, timeout=None):
        """Process replies until *future* is done (TimeoutError after *timeout* s)."""
        deadline = None if timeout is None else time.perf_counter() + timeout
        while not future.done():
            remaining = None if deadline is None else deadline - time.perf_counter()
            if remaining is not None and remaining < 0:
                raise TimeoutError("no reply from %s within %s s" % (self.address.decode(), timeout))
            self._read_one(remaining)

    def _read_one(self, timeout):
        self._socket.setsockopt(zmq.RCVTIMEO, -1 if timeout is None else int(timeout * 1000))
        try:
            msg = self._socket.recv()
        except zmq.error.Again:
            raise TimeoutError("no reply from %s" % self.address.decode())
        self._dispatch(self.serializer.loads(msg))

    def _read_available(self):
        try:
            while True:
                self._read_one(0)
        except TimeoutError:
            pass

    def _dispatch(self, msg):
        action = msg['action']
        if action == 'return':
            fut = self._pending.pop(msg['req_id'], None)
            if fut is None:
                return
            if msg['error'] is not None:
                fut.set_exception(RemoteCallException(*msg['error']))
            else:
                fut.set_result(msg['rval'])
        elif action == 'disconnect':
            self._on_disconnect()
        else:
            raise ValueError("Invalid action '%s'" % action)

    def _close_returned(self, fut):
        if fut.exception() is None and fut.result() is True:
            self._on_disconnect()

    def _on_disconnect(self):
        self._disconnected = True
        logger.debug("server %s disconnected", self.address.decode())
        exc = RuntimeError("server %s disconnected before replying" % self.address.decode())
        for fut in list(self._pending.values()):
            if not fut.done():
                fut.set_exception(exc)
        self._pending.clear()
