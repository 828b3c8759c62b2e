import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chiq.corpus import ConversationSession, ConversationTurn
from chiq.gateway import LlmGateway, MockBackend


@pytest.fixture
def mock_gateway():
    """Gateway over an empty mock backend; tests register rules as needed."""
    return LlmGateway(MockBackend())


@pytest.fixture
def hormone_session():
    """Three-turn-style session with a coreference in the final question."""
    return ConversationSession(
        session_id="s1",
        turns=(
            ConversationTurn(
                question="Which glands release hormones into the bloodstream?",
                response="Endocrine glands such as the adrenal and pituitary glands.",
            ),
            ConversationTurn(
                question="Which hormones do the adrenal glands make?",
                response="Cortisol, aldosterone, and adrenaline.",
            ),
        ),
        current_question="What feeling does the third one cause?",
        turn_id="s1_3",
    )
