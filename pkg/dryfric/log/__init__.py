# -*- coding: utf-8 -*-
# Distributed under the (new) BSD License. See LICENSE for more info.
"""Logging for the parent process and its workers."""
from .remote import (get_logger_address, set_logger_address, start_log_server,
                     get_host_name, get_process_name, set_process_name, get_thread_name,
                     LogSender, LogServer)
from .handler import SortedLogHandler, log_exceptions
