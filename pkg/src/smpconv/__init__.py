from smpconv.config import pin_single_thread

pin_single_thread()
