import io
import sys
import textwrap

import pytest

from keytrace_sat.extern import (HELLO, PASS, READY, ExternPolicy, extern_policy, format_query,
                                 parse_query, parse_response, serve)
from keytrace_sat.generate import generate_instance
from keytrace_sat.keytrace import KeyTrace, extract_keytrace, save_keytrace, serialize
from keytrace_sat.policy import Budget, ExpertPolicy
from keytrace_sat.solver import solve

from conftest import APPX_F, APPX_KEYTRACE

PY = sys.executable


def script(tmp_path, body: str) -> str:
    path = tmp_path / "child.py"
    path.write_text(textwrap.dedent(body))
    return f"{PY} {path}"


class TestWire:
    def test_query_roundtrip(self):
        kt = KeyTrace(APPX_KEYTRACE)
        line = format_query(4, serialize(APPX_F, kt))
        assert line.startswith("QUERY 4 | [CNF] 1 2 -3 0 ")
        assert line.endswith("[SEP] [D] -4 [D] 1 [D] 2 -3 [D]")
        f, prefix = parse_query(line)
        assert f == APPX_F and prefix.blocks() == kt.blocks()

    @pytest.mark.parametrize("line,expected", [
        ("PASS", (True, None)), ("DECIDE -7", (True, -7)), ("DECIDE 3\n", (True, 3)),
        ("DECIDE 0", (False, None)), ("DECIDE x", (False, None)), ("decide 1", (False, None)),
        ("", (False, None)),
    ])
    def test_parse_response(self, line, expected):
        assert parse_response(line) == expected

    def test_malformed_query(self):
        with pytest.raises(ValueError):
            parse_query("QUERY four | [CNF] [SEP] [D]")

    def test_serve_loop(self):
        kt = KeyTrace(APPX_KEYTRACE)
        stdin = io.StringIO("\n".join([HELLO, format_query(4, serialize(APPX_F, KeyTrace())),
                                       format_query(4, serialize(APPX_F, kt)), "garbage"]) + "\n")
        stdout = io.StringIO()
        serve(ExpertPolicy(kt).query, stdin, stdout)
        assert stdout.getvalue().splitlines() == [READY, "DECIDE -4", PASS, PASS]


class TestExternPolicy:
    def test_pass_server_equals_vsids_except_queries(self):
        _, f, _ = generate_instance(1, 2, 20, 20)
        base, bt = solve(f)
        with extern_policy(f"{PY} -m keytrace_sat.responder pass") as pol:
            meth, mt = solve(f, policy=pol, budget=Budget(3))
        assert mt == bt and meth.queries == 3 and meth.accepted == 0 and meth.extern_failures == 0

    def test_out_of_range_literal_falls_back(self):
        _, f, _ = generate_instance(1, 3, 12, 12)
        base, bt = solve(f)
        with ExternPolicy(f"{PY} -m keytrace_sat.responder const 999") as pol:
            meth, mt = solve(f, policy=pol, budget=Budget(2))
        assert mt == bt and meth.queries == 2 and meth.accepted == 0
        assert meth.outcome == base.outcome

    def test_expert_responder_matches_inprocess(self, tmp_path):
        for i in range(5):
            _, f, _ = generate_instance(4, i, 10, 30)
            _, trail = solve(f)
            kt = extract_keytrace(trail)
            save_keytrace(kt, f.num_vars, tmp_path / "k.kt")
            a, ta = solve(f, policy=ExpertPolicy(kt), budget=Budget(3))
            with ExternPolicy(f"{PY} -m keytrace_sat.responder expert {tmp_path / 'k.kt'}") as pol:
                b, tb = solve(f, policy=pol, budget=Budget(3))
            assert a.counters() == b.counters() and ta == tb

    def test_timeout_disables_and_counts(self, tmp_path):
        cmd = script(tmp_path, """
            import sys, time
            for line in sys.stdin:
                if line.startswith("HELLO"):
                    print("READY", flush=True)
                else:
                    time.sleep(5)
        """)
        _, f, _ = generate_instance(1, 4, 12, 12)
        base, bt = solve(f)
        pol = ExternPolicy(cmd, timeout=0.2)
        meth, mt = solve(f, policy=pol, budget=Budget(3))
        assert mt == bt and meth.extern_failures == 1 and not pol.alive

    def test_crash_is_permanent(self, tmp_path):
        cmd = script(tmp_path, """
            import sys
            print(sys.stdin.readline() and "READY", flush=True)
            sys.stdin.readline()
            sys.exit(3)
        """)
        _, f, _ = generate_instance(1, 5, 12, 12)
        pol = ExternPolicy(cmd)
        stats, _ = solve(f, policy=pol, budget=Budget(3))
        assert stats.extern_failures == 1 and stats.outcome == "SAT"
        assert pol.query(f, KeyTrace()) is None

    def test_malformed_reply_counts_failure(self, tmp_path):
        cmd = script(tmp_path, """
            import sys
            for line in sys.stdin:
                print("READY" if line.startswith("HELLO") else "MAYBE 3", flush=True)
        """)
        _, f, _ = generate_instance(1, 6, 12, 12)
        base, bt = solve(f)
        with ExternPolicy(cmd) as pol:
            meth, mt = solve(f, policy=pol, budget=Budget(2))
        assert mt == bt and meth.extern_failures == 2

    def test_bad_handshake(self, tmp_path):
        cmd = script(tmp_path, """
            import sys
            sys.stdin.readline()
            print("HI", flush=True)
        """)
        pol = ExternPolicy(cmd)
        assert pol.failures == 1 and not pol.alive

    def test_missing_executable(self):
        pol = ExternPolicy("/nonexistent/responder")
        assert pol.failures == 1 and pol.query(APPX_F, KeyTrace()) is None
