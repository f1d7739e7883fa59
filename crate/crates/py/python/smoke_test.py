"""Smoke test for the compiled module: python python/smoke_test.py"""

import math

import classcode


def test_code_space():
    codes = classcode.valid_codes()
    assert codes == list(range(1, 100))
    assert classcode.CODE_COUNT == 99
    assert classcode.canonicalize(classcode.code_bits(42)) == (42, 0)
    assert classcode.answer_for(0.0) == "A"
    assert classcode.answer_for(math.pi) == "C"


def test_scan_rendered_code():
    for answer, theta in zip("ABCD", (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)):
        pixels, w, h, truth = classcode.render_code(17, 64.0, theta)
        assert len(pixels) == w * h
        dets = classcode.scan(pixels, w, h)
        assert [(d.ordinal, d.answer) for d in dets] == [(17, answer)]
        assert truth[0]["ordinal"] == 17


def test_classroom():
    pixels, w, h, truth = classcode.render_scene(classcode.classroom_scene(1))
    got = {(d.ordinal, d.answer) for d in classcode.scan(pixels, w, h)}
    assert got == {(c["ordinal"], c["answer"]) for c in truth}


def test_session():
    s = classcode.Session("7b", list(range(1, 11)), logical_clock=True)
    q = s.start_question("warmup")
    s.begin_take()
    pixels, w, h, _ = classcode.render_code(3, 64.0, math.pi / 2)
    for _ in range(5):
        s.add_frame(pixels, w, h)
    assert s.end_take() == [(3, "B")]
    s.set_answer(7, "D")
    assert s.summary(q) == {"A": 0, "B": 1, "C": 0, "D": 1, "unknown": 8}
    s.begin_take("rollcall")
    s.add_frame(pixels, w, h)
    s.end_take(single_shot=True)
    assert s.present() == [3]
    again = classcode.Session.replay(s.export_log())
    assert again.summary(q) == s.summary(q)
    assert again.summary_csv() == s.summary_csv()
    try:
        s.set_answer(100, "A")
    except ValueError:
        pass
    else:
        raise AssertionError("ordinal 100 accepted")


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
            print("ok", name)
