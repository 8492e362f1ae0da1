import logging
import threading
import time

import httpx

logger = logging.getLogger(__name__)

RETRY_ATTEMPTS = 3
RETRY_BACKOFF = 0.5
RETRYABLE_STATUS = {408, 425, 429, 500, 502, 503, 504}


class TransportFailure(Exception):
    pass


class JsonEndpoint:
    """POST JSON to one URL with bounded in-flight requests, retries and exponential backoff.

    ``transport`` is handed to ``httpx.Client`` (tests pass ``httpx.MockTransport``).
    """

    def __init__(self, url, token="", timeout=45.0, max_inflight=4,
                 attempts=RETRY_ATTEMPTS, backoff=RETRY_BACKOFF, transport=None, sleep=time.sleep):
        self.url = url
        self.attempts = attempts
        self.backoff = backoff
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_inflight)
        headers = {"Content-Type": "application/json"}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def post(self, payload):
        last_error = None
        for attempt in range(1, self.attempts + 1):
            try:
                with self._slots:
                    response = self._client.post(self.url, json=payload)
                if response.status_code in RETRYABLE_STATUS:
                    raise httpx.HTTPStatusError(
                        f"status {response.status_code}", request=response.request, response=response
                    )
                response.raise_for_status()
                return response.json()
            except httpx.HTTPStatusError as exc:
                if exc.response.status_code not in RETRYABLE_STATUS:
                    raise TransportFailure(f"{self.url} answered {exc.response.status_code}") from exc
                last_error = exc
            except (httpx.TransportError, ValueError) as exc:
                last_error = exc
            if attempt < self.attempts:
                delay = self.backoff * (2 ** (attempt - 1))
                logger.warning("attempt %d/%d on %s failed (%s); retrying in %.2fs",
                               attempt, self.attempts, self.url, last_error, delay)
                self._sleep(delay)
        raise TransportFailure(f"{self.url} failed after {self.attempts} attempts: {last_error}")

    def close(self):
        self._client.close()
