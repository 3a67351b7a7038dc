"""Entry point of worker processes created with start_worker.

Reads a JSON configuration from stdin, starts a TaskServer, reports its
address to the parent over a PAIR socket and serves until closed.
"""
import os
import sys
import json
import time
import traceback
import faulthandler
import logging

import zmq


def main():
    stdin = sys.stdin.read()
    assert len(stdin) > 0, "This module should be invoked from dryfric.workers.start_worker"
    conf = json.loads(stdin)
    procname = sys.argv[1] if len(sys.argv) > 1 else None

    faulthandler.enable()
    logger = logging.getLogger()
    logger.setLevel(conf['loglevel'])

    from dryfric import log
    from dryfric.workers.server import TaskServer

    if procname is not None:
        log.set_process_name(procname)
    if conf['logaddr'] is not None:
        log.set_logger_address(conf['logaddr'])
    log.log_exceptions()
    logger.info("new worker %s log_addr:%s log_level:%s", procname, conf['logaddr'], conf['loglevel'])

    bootstrap_sock = zmq.Context.instance().socket(zmq.PAIR)
    bootstrap_sock.connect(conf['bootstrap_addr'].encode())
    bootstrap_sock.linger = 1000

    try:
        server = TaskServer()
        status = {'address': server.address.decode(), 'pid': os.getpid()}
    except Exception:
        logger.error("Error starting TaskServer:", exc_info=True)
        status = {'error': traceback.format_exception(*sys.exc_info()), 'pid': os.getpid()}

    # send status repeatedly until the parent replies
    start = time.time()
    while time.time() < start + 10.0:
        bootstrap_sock.send_json(status)
        try:
            bootstrap_sock.recv(zmq.NOBLOCK)
            break
        except zmq.error.Again:
            time.sleep(0.01)
    bootstrap_sock.close()

    if 'address' in status:
        server.run_forever()


if __name__ == '__main__':
    main()
