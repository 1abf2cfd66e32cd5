# Tests for emotion-mixer
