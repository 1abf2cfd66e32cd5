"""
Load test for emotion-mixer

Run with:
  locust -f locustfile.py --host=http://localhost:8000

Then open http://localhost:8089 to start the test
"""

from locust import HttpUser, task, between
import random


REFERENCES = ["neutral", "angry", "happy", "sad"]
STEPS = [0, 30, 60, 90]


class MixerUser(HttpUser):
    """Simulates a synthesis front end asking for attribute vectors"""

    wait_time = between(0.1, 0.5)

    @task(10)
    def mix(self):
        """POST /mix - the main endpoint"""
        self.client.post("/mix", json={
            "primary_emotion": "surprise",
            "reference_percentages": {random.choice(REFERENCES): random.choice(STEPS)},
        })

    @task(3)
    def sweep(self):
        self.client.post("/sweep", json={"emotion": random.choice(REFERENCES)})

    @task(2)
    def health_check(self):
        """GET /health"""
        self.client.get("/health")

    @task(1)
    def get_version(self):
        self.client.get("/version")


class ScoringUser(HttpUser):
    """Burst traffic against the trained models"""

    wait_time = between(0, 0.1)

    @task(3)
    def predict(self):
        self.client.post("/predict", json={"features": [random.gauss(0, 1) for _ in range(384)]})

    @task(1)
    def classify(self):
        self.client.post("/classify", json={"features": [random.gauss(0, 1) for _ in range(384)]})
