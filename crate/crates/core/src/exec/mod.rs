//! Deterministic tracing interpreter and unit-test harness.
//!
//! Every executed statement emits one [`Event`] carrying the statement's
//! token span and a snapshot of the current frame taken right after it ran.
//! Compound statements emit an event each time their header is evaluated:
//! once per `if`, once per `while` condition check and once per `for`
//! iteration plus the final exhausted check. A statement that fails emits
//! its event with the state before it ran, then the trace ends with a
//! runtime error located at that statement.

mod interp;
mod trace;
mod value;

use serde::{Deserialize, Serialize};

pub use interp::MAX_CALL_DEPTH;
pub use trace::{Event, Outcome, RuntimeError, Trace, WireError};
pub use value::{Value, MAX_LIST_LEN};

use crate::Program;

pub const DEFAULT_FUEL: usize = 100_000;
pub const MAX_FUEL: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitTest {
    pub args: Vec<Value>,
    pub expected: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub passed: Vec<bool>,
    pub r_hat: f64,
    pub first_failing: Option<usize>,
    /// The first test that raised, with its error.
    pub runtime_error: Option<(usize, RuntimeError)>,
}

/// Execute `program` on `args` with at most `fuel` events.
pub fn run(program: &Program, args: &[Value], fuel: usize) -> Trace {
    assert!(fuel > 0 && fuel <= MAX_FUEL, "fuel must be in 1..={MAX_FUEL}");
    interp::Interpreter::new(program, fuel).run(args)
}

/// Run every test; raising or running out of fuel fails the test.
pub fn run_tests(program: &Program, tests: &[UnitTest], fuel: usize) -> TestOutcome {
    assert!(!tests.is_empty(), "at least one test is required");
    let mut passed = Vec::with_capacity(tests.len());
    let mut runtime_error = None;
    for (i, t) in tests.iter().enumerate() {
        let trace = run(program, &t.args, fuel);
        passed.push(trace.returned() == Some(&t.expected));
        if let Outcome::RuntimeError(e) = trace.outcome {
            runtime_error.get_or_insert((i, e));
        }
    }
    let n_pass = passed.iter().filter(|&&p| p).count();
    TestOutcome {
        r_hat: n_pass as f64 / tests.len() as f64,
        first_failing: passed.iter().position(|&p| !p),
        passed,
        runtime_error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LIS: &str = "def lis(nums):\n  n = len(nums)\n  if n == 0:\n    return 0\n  dp = [1] * n\n  for i in range(1, n):\n    for j in range(i):\n      if nums[i] > nums[j]:\n        dp[i] = max(dp[i], dp[j] + 1)\n  return max(dp)";

    fn ints(xs: &[i64]) -> Value {
        Value::List(xs.iter().map(|&x| Value::Int(x)).collect())
    }

    fn exec(src: &str, args: Vec<Value>) -> Trace {
        run(&Program::parse(src).unwrap(), &args, DEFAULT_FUEL)
    }

    #[test]
    fn lis_results() {
        assert_eq!(exec(LIS, vec![ints(&[1, 3, 3, 5])]).returned(), Some(&Value::Int(3)));
        let buggy = LIS.replace("nums[i] > nums[j]", "nums[i] >= nums[j]");
        assert_eq!(exec(&buggy, vec![ints(&[1, 3, 3, 5])]).returned(), Some(&Value::Int(4)));
        assert_eq!(exec(LIS, vec![ints(&[])]).returned(), Some(&Value::Int(0)));
    }

    #[test]
    fn fuel_exhaustion_stops_at_budget() {
        let p = Program::parse("def f(x):\n  while True:\n    x += 1\n  return x").unwrap();
        let t = run(&p, &[Value::Int(0)], 100);
        assert_eq!(t.outcome, Outcome::FuelExhausted);
        assert_eq!(t.len(), 100);
    }

    #[test]
    fn loop_events() {
        // for header: 3 iterations + exhausted check; body: 3 events.
        let t = exec("def f(n):\n  s = 0\n  for i in range(n):\n    s += i\n  return s", vec![Value::Int(3)]);
        let lines: Vec<u32> = t.events.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3, 4, 3, 4, 3, 4, 3, 5]);
        assert_eq!(t.returned(), Some(&Value::Int(3)));
        assert_eq!(t.events[1].state.get("i"), Some(&Value::Int(0)));
        assert!(t.events.iter().enumerate().all(|(i, e)| e.k == i + 1));
    }

    #[test]
    fn runtime_error_carries_statement_span() {
        let src = "def f(xs):\n  a = 1\n  b = xs[5]\n  return b";
        let t = exec(src, vec![ints(&[1])]);
        let Outcome::RuntimeError(e) = &t.outcome else { panic!("{:?}", t.outcome) };
        assert_eq!(e.message, "list index out of range");
        assert_eq!(e.line, 3);
        // `b = xs [ 5 ]` are tokens 10..=15.
        assert_eq!((e.span.first, e.span.last), (10, 15));
        assert_eq!(t.len(), 2);
        assert!(!t.events[1].state.contains_key("b"));
    }

    #[test]
    fn recursion_and_depth_limit() {
        let fib = "def fib(n):\n  if n < 2:\n    return n\n  return fib(n - 1) + fib(n - 2)";
        assert_eq!(exec(fib, vec![Value::Int(10)]).returned(), Some(&Value::Int(55)));
        let forever = "def f(n):\n  return f(n + 1)";
        let t = exec(forever, vec![Value::Int(0)]);
        assert!(matches!(&t.outcome, Outcome::RuntimeError(e) if e.message.contains("recursion")));
    }

    #[test]
    fn append_and_index_assignment() {
        let src = "def f(n):\n  out = []\n  grid = [[0] * 2] * 2\n  for i in range(n):\n    append(out, i * i)\n  grid[1][0] = 7\n  return [out, grid]";
        let got = exec(src, vec![Value::Int(3)]).returned().cloned().unwrap();
        assert_eq!(got, Value::List(vec![ints(&[0, 1, 4]), Value::List(vec![ints(&[0, 0]), ints(&[7, 0])])]));
    }

    #[test]
    fn missing_return_and_arity_are_runtime_errors() {
        let t = exec("def f(x):\n  x = 1", vec![Value::Int(0)]);
        assert!(matches!(&t.outcome, Outcome::RuntimeError(e) if e.message.contains("without returning")));
        let t = exec("def f(x, y):\n  return x", vec![Value::Int(0)]);
        assert!(matches!(&t.outcome, Outcome::RuntimeError(e) if e.message.contains("takes 2")));
    }

    #[test]
    fn test_harness() {
        let p = Program::parse(LIS).unwrap();
        let tests = vec![
            UnitTest { args: vec![ints(&[10, 9, 2, 5, 3, 7, 101, 18])], expected: Value::Int(4) },
            UnitTest { args: vec![ints(&[1, 3, 3, 5])], expected: Value::Int(3) },
        ];
        let o = run_tests(&p, &tests, DEFAULT_FUEL);
        assert_eq!((o.r_hat, o.first_failing), (1.0, None));
        let buggy = Program::parse(&LIS.replace("nums[i] > nums[j]", "nums[i] >= nums[j]")).unwrap();
        let o = run_tests(&buggy, &tests, DEFAULT_FUEL);
        assert_eq!((o.r_hat, o.first_failing), (0.5, Some(1)));
        let raising = Program::parse("def f(xs):\n  return xs[100]").unwrap();
        let o = run_tests(&raising, &tests, DEFAULT_FUEL);
        assert_eq!(o.r_hat, 0.0);
        assert_eq!(o.runtime_error.as_ref().map(|r| r.0), Some(0));
    }

    #[test]
    fn deep_expressions_under_deep_recursion_fit_a_small_stack() {
        let nested = format!("{}f(n + 1){}", "1 + (".repeat(90), ")".repeat(90));
        let src = format!("def f(n):\n  if n > 1000:\n    return 0\n  return {nested}");
        let handle = std::thread::Builder::new()
            .stack_size(2 << 20)
            .spawn(move || exec(&src, vec![Value::Int(0)]).outcome)
            .unwrap();
        let outcome = handle.join().expect("no stack overflow");
        assert!(matches!(outcome, Outcome::RuntimeError(e) if e.message.contains("recursion")));
    }

    #[test]
    fn short_circuit_and_truthiness() {
        let src = "def f(xs):\n  if len(xs) > 0 and xs[0] == 1:\n    return not xs\n  return xs or [9]";
        assert_eq!(exec(src, vec![ints(&[])]).returned(), Some(&ints(&[9])));
        assert_eq!(exec(src, vec![ints(&[1])]).returned(), Some(&Value::Bool(false)));
    }
}
