import time


class StopWatch:
    """A stopwatch for timing solve phases"""

    def __init__(self):
        self.start_time = None
        self.is_counting = False
        self.elapsed = 0.0

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.elapsed = self.stop()

    def start(self):
        """Start the stopwatch"""
        self.start_time = time.perf_counter()
        self.is_counting = True

    def stop(self):
        """Stop the stopwatch

        Returns:
            float: Seconds on the stopwatch before being stopped
        """
        seconds = self.get_time()
        self.start_time = None
        self.is_counting = False
        return seconds

    def get_time(self):
        """Gets the current time on the stopwatch

        Returns:
            float: Seconds counted so far
        """
        if not self.is_counting:
            return 0.0
        return time.perf_counter() - self.start_time
