# -*- coding: utf-8 -*-
# Copyright (c) 2016, French National Center for Scientific Research (CNRS)
# Distributed under the (new) BSD License. See LICENSE for more info.

import sys
import time
import heapq
import atexit
import logging
import itertools
import threading
import traceback

from .remote import get_host_name, get_process_name


try:
    import colorama
    HAVE_COLORAMA = True
except ImportError:
    HAVE_COLORAMA = False


def _level_colors():
    s, f = colorama.Style, colorama.Fore
    return {
        logging.DEBUG: s.DIM + f.WHITE,
        logging.INFO: s.BRIGHT + f.WHITE,
        logging.WARNING: s.BRIGHT + f.YELLOW,
        logging.ERROR: s.BRIGHT + f.RED,
        logging.CRITICAL: colorama.Back.RED,
    }


def _header_colors():
    fores = [colorama.Fore.GREEN, colorama.Fore.CYAN, colorama.Fore.BLUE, colorama.Fore.MAGENTA]
    return [style + fore for style in (colorama.Style.NORMAL, colorama.Style.BRIGHT)
            for fore in fores]


class SortedLogHandler(logging.StreamHandler):
    """Stream handler that writes records in creation order.

    Records forwarded by workers can arrive after later local records, so
    each record is held for *delay* seconds in a heap keyed by its creation
    time before it is written. Every line starts with a
    ``[host:process:thread]`` header; headers and levels are colored when
    colorama is installed and the stream is a terminal.
    """
    def __init__(self, stream=None, delay=0.2):
        stream = sys.stderr if stream is None else stream
        self.use_color = HAVE_COLORAMA and bool(getattr(stream, 'isatty', lambda: False)())
        if self.use_color:
            stream = colorama.AnsiToWin32(stream).stream
            self._levels = _level_colors()
            self._palette = _header_colors()
        logging.StreamHandler.__init__(self, stream)
        self.delay = delay
        self._heap = []
        self._order = itertools.count()
        self._lock = threading.Lock()
        self._headers = {}
        threading.Thread(target=self._drain, daemon=True, name='log-writer').start()
        atexit.register(self.flush_records)

    def emit(self, record):
        with self._lock:
            heapq.heappush(self._heap, (record.created, next(self._order), record))

    def _pop_older_than(self, limit):
        out = []
        with self._lock:
            while self._heap and self._heap[0][0] < limit:
                out.append(heapq.heappop(self._heap)[2])
        return out

    def _drain(self):
        while True:
            ready = self._pop_older_than(time.time() - self.delay)
            for record in ready:
                logging.StreamHandler.emit(self, record)
            if not ready:
                time.sleep(0.05)

    def flush_records(self):
        """Write every held record now."""
        for record in self._pop_older_than(float('inf')):
            logging.StreamHandler.emit(self, record)
        self.flush()

    def format(self, record):
        message = logging.StreamHandler.format(self, record)
        if self.use_color:
            level = min(max(record.levelno // 10 * 10, logging.DEBUG), logging.CRITICAL)
            message = self._levels[level] + message + colorama.Style.RESET_ALL
        return self._header(record) + ' ' + message

    def _header(self, record):
        key = (getattr(record, 'host_name', None) or get_host_name(),
               getattr(record, 'process_name', None) or get_process_name(),
               getattr(record, 'thread_name', None) or record.threadName)
        header = self._headers.get(key)
        if header is None:
            header = '[%s:%s:%s]' % key
            if self.use_color:
                color = self._palette[len(self._headers) % len(self._palette)]
                header = color + header + colorama.Style.RESET_ALL
            self._headers[key] = header
        return header


_previous_hook = None


def _log_unhandled_exception(exc, val, tb):
    text = ''.join('    ' + line for line in traceback.format_exception(exc, val, tb))
    logging.getLogger().error("Unhandled exception:\n%s", text)


def log_exceptions():
    """Send unhandled exceptions to the root logger instead of stderr."""
    global _previous_hook
    if sys.excepthook is not _log_unhandled_exception:
        _previous_hook = sys.excepthook
        sys.excepthook = _log_unhandled_exception
