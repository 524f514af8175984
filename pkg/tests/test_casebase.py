import pytest
from hypothesis import given, settings, strategies as st

from cbrtwin.casebase import (Assignment, Case, CaseBase, CaseStats, Notify, PddlGoal, Solution, parse_case_base,
                              print_case_base)
from cbrtwin.domain import Situation, Vocabulary
from cbrtwin.errors import EvalError, ParseError, ResolutionError
from cbrtwin.expr import (And, BinOp, Compare, Literal, Not, Or, Path, eval_arith, eval_condition, format_condition,
                          parse_condition)
from cbrtwin.lexer import Lexer

HEADER = "import InjectionMolding;\ncasebase T {\n"


def cond(text, domain):
    return parse_condition(Lexer(text), Vocabulary([domain]))


def cb_of(body, domain):
    return parse_case_base(HEADER + body + "\n}\n", [domain], "t.cb")


def test_bundled_high_nozzle_case(casebase):
    case = casebase.get("HighNozzleTemperature")
    assert case.known
    assert format_condition(case.condition) == "ProcessData.nozzleTemperature > 500"
    assert case.solution.parts == (Assignment(Path("ProcessData.heating", "int"), Literal(1, "int")),)
    assert format_condition(case.solution.yields) == "ProcessData.nozzleTemperature <= 500"
    assert case.stats == CaseStats(0, 0)


def test_bundled_dangerous_pressure_is_unknown_with_pddl_goal(casebase):
    case = casebase.get("DangerousPressure")
    assert not case.known and case.kind == "unknown"
    assert isinstance(case.fallback, PddlGoal)
    assert case.fallback.domain == "pressure-control"
    assert [str(g) for g in case.fallback.goal] == ["(low-pressure machine)"]


def test_pddl_goal_without_domain_name(domain):
    cb = cb_of("case D { when ProcessData.pressure > 2000; fallback pddl goal (low-pressure machine); }", domain)
    assert cb.cases[0].fallback.domain is None


def test_bundled_filling_study(casebase):
    assert isinstance(casebase.get("TooMuchResidualMaterial").fallback, Notify)
    assert [c.name for c in casebase.known_cases()] == ["HighNozzleTemperature", "LowBackPressure",
                                                       "MoreMaterialInjectable"]


def test_solution_without_yields(domain):
    with pytest.raises(ParseError, match="without yields"):
        cb_of("case A { when ProcessData.pressure > 1; solution { ProcessData.heating = 1; } }", domain)


def test_yields_without_solution(domain):
    with pytest.raises(ParseError, match="yields without solution"):
        cb_of("case A { when ProcessData.pressure > 1; yields ProcessData.pressure < 1; }", domain)


def test_duplicate_case_name(domain):
    body = "case A { when ProcessData.pressure > 1; }\ncase A { when ProcessData.pressure > 2; }"
    with pytest.raises(ParseError, match="duplicate case name 'A'") as err:
        cb_of(body, domain)
    assert err.value.line == 4


@pytest.mark.parametrize("body, message", [
    ('case A { when ProcessData.pressure > "high"; }', "type mismatch"),
    ("case A { when ProcessData.pressure > 1; solution { ProcessData.heating = 1.5; } "
     "yields ProcessData.pressure < 1; }", "type mismatch"),
    ("case A { when ProcessData.pressure > 1; solution { } yields ProcessData.pressure < 1; }", "at least one"),
    ("case A { // @stats applications=1 successes=2\n when ProcessData.pressure > 1; }", "successes exceed"),
    ("case A { // @statz x\n when ProcessData.pressure > 1; }", "malformed annotation"),
    ("case A { when ProcessData.pressure > 1; fallback email; }", "expected 'notify' or 'pddl goal'"),
])
def test_case_errors(domain, body, message):
    with pytest.raises(ParseError, match=message):
        cb_of(body, domain)


def test_unknown_attribute_names_file_line_and_path(domain):
    with pytest.raises(ResolutionError) as err:
        cb_of("case A {\n  when ProcessData.noSuch > 1;\n}", domain)
    assert err.value.line == 4 and err.value.source == "t.cb"
    assert "noSuch" in str(err.value)


def test_unloaded_import(domain):
    with pytest.raises(ParseError, match="not loaded"):
        parse_case_base("import Nope; casebase X { }", [domain])


def test_stats_annotation_is_read(domain):
    cb = cb_of("case A { // @stats applications=5 successes=3\n when ProcessData.pressure > 1; }", domain)
    assert cb.cases[0].stats == CaseStats(5, 3)


def test_bundled_round_trip_is_byte_stable(casebase, domain):
    printed = print_case_base(casebase)
    again = parse_case_base(printed, [domain])
    assert again == casebase
    assert print_case_base(again) == printed


def test_empty_case_base_round_trip(domain):
    text = print_case_base(CaseBase("Empty", ["InjectionMolding"]))
    assert "case" not in text.replace("casebase", "")
    assert parse_case_base(text, [domain]).cases == []


def test_learned_equality_case_round_trip(domain):
    p = Path("ProcessData.pressure", "float")
    f = Path("PhaseData.injectionFlow", "float")
    case = Case("learned_c7", And((Compare("==", p, Literal(2320.0, "float")), Compare("==", f, Literal(65.0, "float")))),
                Solution((Assignment(f, Literal(50.0, "float")),), Not(Compare(">", p, Literal(2000, "int")))),
                stats=CaseStats(1, 1))
    cb = CaseBase("L", ["InjectionMolding"], [case])
    text = print_case_base(cb)
    assert "ProcessData.pressure == 2320.0" in text and "PhaseData.injectionFlow == 65.0" in text
    assert parse_case_base(text, [domain]) == cb


# -- conditions -------------------------------------------------------------

def test_strict_inequality_boundary(domain):
    c = cond("nozzleTemperature > 500", domain)
    assert eval_condition(c, {"ProcessData.nozzleTemperature": 510.0})
    assert not eval_condition(c, {"ProcessData.nozzleTemperature": 500.0})


def test_conjunction_with_boolean():
    from cbrtwin.domain import parse_domain_model
    m = parse_domain_model("model M { class C { a: int; b: boolean; } }")
    c = cond("a > 1 && b == true", m)
    assert eval_condition(c, Situation(1, {"C.a": 2, "C.b": False})) is False
    assert eval_condition(c, {"C.a": 2, "C.b": True}) is True


def test_numeric_operator_on_boolean_rejected():
    from cbrtwin.domain import parse_domain_model
    m = parse_domain_model("model M { class C { b: boolean; s: string; } }")
    with pytest.raises(ParseError, match="type mismatch"):
        cond("b > true", m)
    assert eval_condition(cond('s != "x"', m), {"C.s": "y"})


def test_precedence_and_negation(domain):
    c = cond("heating == 1 || heating == 2 && !(pressure > 10)", domain)
    assert isinstance(c, Or)
    assert eval_condition(c, {"ProcessData.heating": 1, "ProcessData.pressure": 50.0})
    assert not eval_condition(c, {"ProcessData.heating": 2, "ProcessData.pressure": 50.0})


def test_missing_attribute_is_eval_error(domain):
    with pytest.raises(EvalError, match="nozzleTemperature"):
        eval_condition(cond("nozzleTemperature > 1", domain), {})


def test_arithmetic(domain):
    sov = Path("PhaseData.switchOverVolume", "float")
    assert eval_arith(BinOp("-", sov, Literal(2, "int")), {"PhaseData.switchOverVolume": 30.0}) == 28.0
    with pytest.raises(EvalError):
        eval_arith(BinOp("/", sov, Literal(0, "int")), {"PhaseData.switchOverVolume": 1.0})


# -- generated round trips --------------------------------------------------

NUMERIC = [("ProcessData.nozzleTemperature", "float"), ("ProcessData.pressure", "float"),
           ("ProcessData.heating", "int"), ("PhaseData.switchOverVolume", "float"),
           ("PhaseData.cylinderHeating", "int")]

numbers = {
    "float": st.floats(-1e4, 1e4, allow_nan=False).map(lambda x: Literal(x, "float")),
    "int": st.integers(-1000, 1000).map(lambda x: Literal(x, "int")),
}


@st.composite
def comparisons(draw):
    path, t = draw(st.sampled_from(NUMERIC))
    op = draw(st.sampled_from(["<", "<=", ">", ">=", "==", "!="]))
    return Compare(op, Path(path, t), draw(numbers[t]))


conditions = st.recursive(
    comparisons(),
    lambda inner: st.one_of(
        st.lists(inner, min_size=2, max_size=3).map(lambda xs: And(tuple(xs))),
        st.lists(inner, min_size=2, max_size=3).map(lambda xs: Or(tuple(xs))),
        inner.map(Not),
    ),
    max_leaves=6,
)


def _flat(e):
    """Printing drops redundant grouping, so nested same-kind connectives flatten on re-parse."""
    if isinstance(e, (And, Or)):
        items = []
        for item in map(_flat, e.items):
            items.extend(item.items if type(item) is type(e) else [item])
        return type(e)(tuple(items))
    if isinstance(e, Not):
        return Not(_flat(e.operand))
    return e


@st.composite
def case_bases(draw):
    n = draw(st.integers(0, 4))
    cases = []
    for i in range(n):
        condition = _flat(draw(conditions))
        solution = None
        if draw(st.booleans()):
            solution = Solution((Assignment(Path("ProcessData.heating", "int"), draw(numbers["int"])),),
                                _flat(draw(conditions)))
        fallback = draw(st.sampled_from([None, Notify("call the \"operator\"")]))
        apps = draw(st.integers(0, 9))
        stats = CaseStats(apps, draw(st.integers(0, apps)))
        cases.append(Case(f"C{i}", condition, solution, fallback, stats))
    return CaseBase("Gen", ["InjectionMolding"], cases)


@settings(max_examples=150, deadline=None)
@given(case_bases())
def test_generated_case_bases_round_trip(domain, cb):
    text = print_case_base(cb)
    again = parse_case_base(text, [domain])
    assert again == cb
    assert all(c.known == (c.solution is not None) for c in again.cases)


@settings(max_examples=200, deadline=None)
@given(conditions, st.fixed_dictionaries({p: st.integers(-50, 50) for p, _ in NUMERIC}))
def test_printed_condition_evaluates_the_same(domain, c, values):
    reparsed = cond(format_condition(c), domain)
    assert eval_condition(reparsed, values) == eval_condition(c, values)
