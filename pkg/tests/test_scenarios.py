import pytest

from phpwarden.scenarios import (
    BUILTIN_SCENARIOS,
    ScenarioError,
    _tokenize,
    replay_training,
    run_scenario,
)

from conftest import CREDENTIALS


# -- tokenizer ------------------------------------------------------------------


def test_tokenize_plain_words():
    assert _tokenize("request mgr GET /Home.php") == ["request", "mgr", "GET", "/Home.php"]


def test_tokenize_double_quotes_group():
    assert _tokenize('client eve "Mozilla/5.0 (X11) attack"') == [
        "client", "eve", "Mozilla/5.0 (X11) attack",
    ]


def test_tokenize_apostrophe_is_ordinary():
    # the don't_block literal must survive tokenization
    assert _tokenize("request c GET /x expect=don't_block") == [
        "request", "c", "GET", "/x", "expect=don't_block",
    ]


def test_tokenize_unclosed_quote_raises():
    with pytest.raises(ValueError, match="unclosed"):
        _tokenize('client eve "no closing')


def test_tokenize_collapses_runs_of_spaces():
    assert _tokenize("  a   b\tc  ") == ["a", "b", "c"]


# -- script validation ------------------------------------------------------------


def test_unknown_directive_reports_line(proxy_stack):
    with pytest.raises(ScenarioError, match="line 2"):
        run_scenario("client a agent/1\nfrobnicate a\n", proxy_stack.addr)


def test_request_for_undefined_client_is_error(proxy_stack):
    with pytest.raises(ScenarioError, match="line 1"):
        run_scenario("request ghost GET /x\n", proxy_stack.addr)


def test_bad_option_is_error(proxy_stack):
    script = "client a agent/1\nrequest a GET /x expect=maybe\n"
    with pytest.raises(ScenarioError, match="bad option"):
        run_scenario(script, proxy_stack.addr)


def test_unclosed_quote_in_script_names_line(proxy_stack):
    with pytest.raises(ScenarioError, match="line 1"):
        run_scenario('client a "broken\n', proxy_stack.addr)


def test_steal_requires_both_clients(proxy_stack):
    with pytest.raises(ScenarioError, match="line 2"):
        run_scenario("client a agent/1\nsteal a ghost\n", proxy_stack.addr)


def test_empty_scenario_passes(proxy_stack):
    result = run_scenario("# nothing but comments\n\n", proxy_stack.addr, name="empty")
    assert result.passed
    assert result.transcript == ["PASS empty"]


# -- execution against the live stack ----------------------------------------------


@pytest.mark.parametrize("name", sorted(BUILTIN_SCENARIOS))
def test_builtin_scenarios_pass(proxy_stack, name):
    result = run_scenario(BUILTIN_SCENARIOS[name], proxy_stack.addr, name=name)
    assert result.passed, "\n".join(result.transcript)
    assert result.transcript[-1] == f"PASS {name}"


def test_expectation_mismatch_fails_but_keeps_going(proxy_stack):
    script = (
        "client c agent/expect-mismatch\n"
        "request c GET /About.php expect=block\n"
        "request c GET /Nowhere.php expect=block reason=unknown_request\n"
    )
    result = run_scenario(script, proxy_stack.addr, name="mismatch")
    assert not result.passed
    assert result.transcript[-1] == "FAIL mismatch"
    # the later, correct step still executed and is in the transcript
    assert any("Nowhere.php" in line and "unknown_request" in line for line in result.transcript)


def test_wrong_reason_fails(proxy_stack):
    script = (
        "client c agent/wrong-reason\n"
        "request c GET /Home.php expect=block reason=identity_mismatch\n"
    )
    result = run_scenario(script, proxy_stack.addr, name="wrong-reason")
    assert not result.passed
    assert any("expected reason identity_mismatch" in line for line in result.transcript)


def test_login_failure_marks_scenario_failed(proxy_stack):
    script = (
        "client c agent/bad-login\n"
        "login c mark wrong-password\n"
    )
    result = run_scenario(script, proxy_stack.addr, name="bad-login")
    assert not result.passed
    assert any("no session cookie" in line for line in result.transcript)


def test_transcript_records_each_step(proxy_stack):
    result = run_scenario(
        BUILTIN_SCENARIOS["happy-manager"], proxy_stack.addr, name="happy-manager"
    )
    text = "\n".join(result.transcript)
    assert "logged in as mark" in text
    assert "GET /Home.php -> don't_block" in text
    assert "GET /Viewusers.php -> don't_block" in text


def test_scenarios_are_deterministic(proxy_stack):
    # same script, same fresh identity: verdicts and transcript text repeat
    first = run_scenario(BUILTIN_SCENARIOS["auth-bypass"], proxy_stack.addr, name="a")
    second = run_scenario(BUILTIN_SCENARIOS["auth-bypass"], proxy_stack.addr, name="a")
    assert first.transcript == second.transcript


def test_replay_training_is_block_free(trained, proxy_stack):
    blocks, total = replay_training(trained.store, proxy_stack.addr, CREDENTIALS)
    assert blocks == 0
    # 36 recorded exchanges + one login preamble per authenticated trail
    authenticated_trails = sum(
        1 for t in trained.store.trails if t.role != "0" and t.first_id is not None
    )
    recorded = len(trained.store.recorded_ids())
    assert total == recorded + authenticated_trails
    assert (recorded, authenticated_trails) == (36, 13)
    # replay produced no deviation records either
    assert proxy_stack.enforcer.blocked_count == 0
