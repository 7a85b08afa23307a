"""Smoke test for the compiled extension.

Build and run from the workspace root:

    cargo build -p monoforge-python --features extension-module
    cp target/debug/libmonoforge_py.so python/monoforge.so
    python3 python/smoke_test.py
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent))

import monoforge  # noqa: E402

SOURCE = """
(defcoproduct Seq :type-vars (a) (SeqNil) (SeqCons a (:inst Seq a)))
(defun-typed SeqAppend :type-vars (a) ((x (:inst Seq a)) (y (:inst Seq a))) (:inst Seq a)
  (case-of x (((:inst SeqNil a)) y)
             (((:inst SeqCons a) hd tl) ((:inst SeqCons a) hd ((:inst SeqAppend a) tl y)))))
(defthm-typed SeqAppend_of_SeqNil :type-vars (a) ((x (:inst Seq a)))
  (equal ((:inst SeqAppend a) x ((:inst SeqNil a))) x))
(SeqAppend_of_SeqNil-instantiate int)
"""


def main():
    assert monoforge.read_forms("(a (b 1))") == ["(A (B 1))"]
    assert monoforge.mangle("Seq", ["int"]) == "SEQ-INT"
    assert monoforge.mangle("EitherSeq", ["int", "bool"]) == "EITHERSEQ-INT-BOOL"

    prog = monoforge.Program.compile(SOURCE)
    assert "SEQ-INT" in prog.names()
    assert "(DEFUN-CORE SEQAPPEND-INT " in prog.core_text()
    assert prog.theorem_instances() == ["SEQAPPEND_OF_SEQNIL-INT"]
    for name, obligations in prog.check():
        assert all(ok for _, ok in obligations), name

    [report] = prog.test(depth=3, lo=-1, hi=1)
    assert report.passed and report.verdict == "PASS", report
    # lists of length <= 2 over three integers
    assert report.assignments == 1 + 3 + 9

    bad = monoforge.Program.compile("(defthm-typed Bad ((x int)) (equal x 0))")
    [fail] = bad.test(lo=-1, hi=0)
    assert fail.verdict == "FAIL" and ":COUNTEREXAMPLE ((X -1))" in fail.sexpr

    for text in ["(defun-typed F", "(defcoproduct A (K)) (defcoproduct A (K))"]:
        try:
            monoforge.Program.compile(text)
        except ValueError:
            pass
        else:
            raise AssertionError(f"compiled: {text}")

    try:
        prog.test(theorem="Nope")
    except KeyError:
        pass
    else:
        raise AssertionError("unknown theorem accepted")

    print("smoke test ok")


if __name__ == "__main__":
    main()
