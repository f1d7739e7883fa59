use classcode_core::codec::{Answer, CodeId};
use classcode_core::session::{summary_csv, AnswerValue, LogicalClock, Roster, Session, Source};
use classcode_core::temporal::AcceptedDetection;
use classcode_core::Error;
use proptest::prelude::*;

#[derive(Clone, Debug)]
enum Cmd {
    Question(Option<String>),
    NumberedQuestion(u32),
    Take(Vec<(u8, usize)>),
    Manual(u8, Option<usize>),
    RollCall(Vec<u8>),
    Presence(u8, bool),
}

fn cmd() -> impl Strategy<Value = Cmd> {
    prop_oneof![
        proptest::option::of("[a-z ,\"]{0,8}").prop_map(Cmd::Question),
        (1u32..30).prop_map(Cmd::NumberedQuestion),
        proptest::collection::vec((1u8..=12, 0usize..4), 0..6).prop_map(Cmd::Take),
        (1u8..=12, proptest::option::of(0usize..4)).prop_map(|(o, a)| Cmd::Manual(o, a)),
        proptest::collection::vec(1u8..=12, 0..5).prop_map(Cmd::RollCall),
        (1u8..=12, any::<bool>()).prop_map(|(o, p)| Cmd::Presence(o, p)),
    ]
}

fn accepted(ordinal: u8, answer: Answer) -> AcceptedDetection {
    AcceptedDetection {
        id: CodeId::from_ordinal(ordinal as i64).unwrap(),
        answer,
        sightings: 10,
        longest_run: 10,
        last_center: (1.0, 2.0),
        last_seen_frame: 9,
    }
}

fn run(roster: Roster, cmds: &[Cmd]) -> Session {
    let mut s = Session::start_with_clock(roster, Box::new(LogicalClock::default()));
    for c in cmds {
        let current = s.current_question();
        match c {
            Cmd::Question(tag) => {
                s.start_question(tag.clone());
            }
            Cmd::NumberedQuestion(n) => {
                let exists = s.question(*n).is_some();
                let r = s.start_question_numbered(*n, None);
                assert_eq!(r.is_err(), exists);
            }
            Cmd::Take(items) => {
                if let Some(q) = current {
                    let acc: Vec<_> = items
                        .iter()
                        .map(|&(o, a)| accepted(o, Answer::from_index(a)))
                        .collect();
                    let take = s.next_take_id();
                    s.apply_take(q, &acc, Some(take)).unwrap();
                }
            }
            Cmd::Manual(o, a) => {
                if let Some(q) = current {
                    let v = a.map_or(AnswerValue::Unknown, |i| {
                        AnswerValue::Choice(Answer::from_index(i))
                    });
                    s.set_manual_answer(q, *o as i64, v).unwrap();
                }
            }
            Cmd::RollCall(ids) => {
                let acc: Vec<_> = ids.iter().map(|&o| accepted(o, Answer::C)).collect();
                s.roll_call_take(&acc, None);
            }
            Cmd::Presence(o, p) => {
                s.set_presence(*o as i64, *p).unwrap();
            }
        }
    }
    s
}

proptest! {
    #[test]
    fn replay_reconstructs_state(cmds in proptest::collection::vec(cmd(), 0..40),
                                 roster_size in 0u8..10) {
        let roster = if roster_size == 0 {
            Roster::new("anon", std::iter::empty()).unwrap()
        } else {
            Roster::numbered("7b", roster_size).unwrap()
        };
        let s = run(roster, &cmds);
        let lines = s.export_log();
        let replayed = Session::replay(&lines, Box::new(LogicalClock::default())).unwrap();
        prop_assert_eq!(replayed.state(), s.state());
        prop_assert_eq!(replayed.export_log(), lines);
        prop_assert_eq!(summary_csv(&replayed), summary_csv(&s));

        for (&n, q) in &s.state().questions {
            let chart = s.summarize(n).unwrap();
            if roster_size > 0 {
                prop_assert_eq!(chart.total(), roster_size as u32);
            } else {
                prop_assert_eq!(chart.total() as usize, q.answers.len());
            }
        }
    }

    #[test]
    fn final_answer_is_latest_record(cmds in proptest::collection::vec(cmd(), 0..40)) {
        let s = run(Roster::numbered("c", 12).unwrap(), &cmds);
        let lines = s.export_log();
        for (&n, q) in &s.state().questions {
            for (&o, rec) in &q.answers {
                // the last log line for (question, student) carries the final value
                let last = lines
                    .iter()
                    .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
                    .filter(|v| v["type"] == "answer"
                        && v["question_number"] == n
                        && v["student_ordinal"] == o)
                    .last()
                    .unwrap();
                prop_assert_eq!(last["answer"].as_str().unwrap(), rec.value.to_string());
            }
        }
    }
}

#[test]
fn merge_examples() {
    let mut s = Session::start_with_clock(
        Roster::numbered("c", 3).unwrap(),
        Box::new(LogicalClock::default()),
    );
    let q = s.start_question(None);
    s.apply_take(q, &[accepted(1, Answer::A)], Some(1)).unwrap();
    s.apply_take(q, &[accepted(1, Answer::B)], Some(2)).unwrap();
    assert_eq!(
        s.question(q).unwrap().answer(1),
        AnswerValue::Choice(Answer::B)
    );
    s.apply_take(q, &[accepted(2, Answer::C)], Some(3)).unwrap();
    assert_eq!(
        s.question(q).unwrap().answer(2),
        AnswerValue::Choice(Answer::C)
    );
    s.set_manual_answer(q, 1, AnswerValue::Choice(Answer::D))
        .unwrap();
    assert_eq!(s.question(q).unwrap().answers[&1].source, Source::Manual);
    s.apply_take(q, &[accepted(1, Answer::A)], Some(4)).unwrap();
    assert_eq!(
        s.question(q).unwrap().answer(1),
        AnswerValue::Choice(Answer::A)
    );
    assert_eq!(s.question(q).unwrap().answer(3), AnswerValue::Unknown);
    assert_eq!(
        s.set_manual_answer(q, 0, AnswerValue::Unknown),
        Err(Error::BadOrdinal(0))
    );
    let q2 = s.start_question(None);
    assert_eq!(q2, q + 1);
    assert_eq!(
        s.apply_take(q, &[accepted(1, Answer::A)], None),
        Err(Error::QuestionClosed(q))
    );
}

#[test]
fn apply_take_idempotent_for_identical_takes() {
    let mut s = Session::start_with_clock(
        Roster::numbered("c", 3).unwrap(),
        Box::new(LogicalClock::default()),
    );
    let q = s.start_question(None);
    let at = chrono::DateTime::parse_from_rfc3339("2024-03-01T10:00:00Z")
        .unwrap()
        .with_timezone(&chrono::Utc);
    let acc = [accepted(1, Answer::A), accepted(2, Answer::B)];
    s.apply_take_at(q, &acc, Some(1), at).unwrap();
    let once = s.state().clone();
    let n = s.events().len();
    s.apply_take_at(q, &acc, Some(1), at).unwrap();
    assert_eq!(s.state(), &once);
    assert_eq!(s.events().len(), n);
}

#[test]
fn corrupt_logs_are_rejected() {
    let s = Session::start_with_clock(
        Roster::numbered("c", 3).unwrap(),
        Box::new(LogicalClock::default()),
    );
    let mut lines = s.export_log();
    lines.push("{not json".into());
    assert!(matches!(
        Session::replay(&lines, Box::new(LogicalClock::default())),
        Err(Error::MalformedLog { line: 2, .. })
    ));
    assert!(Session::replay(Vec::<String>::new(), Box::new(LogicalClock::default())).is_err());
}
