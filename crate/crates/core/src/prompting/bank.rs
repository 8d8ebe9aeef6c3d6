use alloc::vec::Vec;

use super::{resources, Task};

pub(crate) const BANK_SIZE: usize = 6;

/// One worked example: a tweet and the answer text shown for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Example {
    /// 1-based key, printed as `E<id>`.
    pub id: usize,
    pub tweet: &'static str,
    pub answer: &'static str,
}

/// The six examples for one task, in printed order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleBank {
    pub task: Task,
    examples: Vec<Example>,
}

impl ExampleBank {
    pub fn builtin(task: Task) -> Self {
        let source = match task {
            Task::AllLocations => resources::LOC_EXAMPLES,
            Task::ImpactAndImpacted => resources::IMPACT_EXAMPLES,
        };
        let examples = parse_bank(source);
        debug_assert_eq!(examples.len(), BANK_SIZE);
        ExampleBank { task, examples }
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn get(&self, id: usize) -> Option<&Example> {
        self.examples.iter().find(|e| e.id == id)
    }
}

// Bank file layout:
//   == E<n>
//   <tweet, one line>
//   -- answer
//   <answer lines>
fn parse_bank(source: &'static str) -> Vec<Example> {
    source
        .split("== E")
        .filter(|block| !block.trim().is_empty())
        .map(|block| {
            let (head, answer) = block.split_once("\n-- answer\n").expect("bank block has an answer");
            let (id, tweet) = head.split_once('\n').expect("bank block has a tweet");
            Example {
                id: id.trim().parse().expect("bank id is numeric"),
                tweet: tweet.trim_end_matches('\n'),
                answer: answer.trim_end_matches('\n'),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_examples_per_task() {
        for task in [Task::AllLocations, Task::ImpactAndImpacted] {
            let bank = ExampleBank::builtin(task);
            let ids: Vec<usize> = bank.examples().iter().map(|e| e.id).collect();
            assert_eq!(ids, [1, 2, 3, 4, 5, 6]);
            for ex in bank.examples() {
                assert!(!ex.tweet.contains('\n'));
                assert!(!ex.tweet.is_empty() && !ex.answer.is_empty());
            }
        }
    }

    #[test]
    fn frozen_entries() {
        let loc = ExampleBank::builtin(Task::AllLocations);
        assert_eq!(
            loc.get(6).unwrap().tweet,
            "655-unit oilsands work camp near Fort McMurray destroyed by wildfire"
        );
        assert_eq!(
            loc.get(2).unwrap().answer,
            "Locations mentioned: Yunanistan (1), Greece (1)"
        );
        let imp = ExampleBank::builtin(Task::ImpactAndImpacted);
        assert_eq!(
            imp.get(5).unwrap().answer,
            "Types of Impact: flood\nImpacted Location: St. Johns River at Main Street Bridge"
        );
        assert!(imp
            .get(4)
            .unwrap()
            .tweet
            .starts_with("RT @0000000000000 #ItalyEarthquake"));
    }
}
