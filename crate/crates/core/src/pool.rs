//! Bounded worker pool over a fixed list of independent work items.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

/// Applies `work` to every item using at most `parallelism` threads and
/// returns the outputs in item order, whatever order they completed in.
///
/// `dispatch` optionally permutes the order in which items are picked up;
/// it must be a permutation of `0..items.len()`.
pub fn run_pool<I, T, F>(items: &[I], parallelism: usize, dispatch: Option<&[usize]>, work: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync,
{
    let order: Vec<usize> = match dispatch {
        Some(order) => {
            debug_assert_eq!(order.len(), items.len());
            order.to_vec()
        }
        None => (0..items.len()).collect(),
    };
    let workers = parallelism.max(1).min(items.len().max(1));
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..items.len()).map(|_| None).collect());

    if workers == 1 {
        for &index in &order {
            let out = work(&items[index]);
            slots.lock().expect("pool slots poisoned")[index] = Some(out);
        }
    } else {
        let next = AtomicUsize::new(0);
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let position = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&index) = order.get(position) else {
                        break;
                    };
                    let out = work(&items[index]);
                    slots.lock().expect("pool slots poisoned")[index] = Some(out);
                });
            }
        });
    }

    slots
        .into_inner()
        .expect("pool slots poisoned")
        .into_iter()
        .map(|slot| slot.expect("every item is processed exactly once"))
        .collect()
}
