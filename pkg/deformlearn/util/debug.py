"""Utilities for profiling runs."""
import sys
import signal

from pyinstrument import Profiler


def attach_profiler():
    """ Profile the rest of the process; SIGTRAP prints the report so far. """
    profiler = Profiler()
    profiler.start()

    def handle_signal(signum, frame):
        profiler.stop()
        sys.stderr.write(profiler.output_text(color=True))
        profiler.start()

    if hasattr(signal, 'SIGTRAP'):
        signal.signal(signal.SIGTRAP, handle_signal)
    return profiler


def report_profile(profiler, stream=None):
    profiler.stop()
    (stream or sys.stderr).write(profiler.output_text(color=False))
