//! 4-connected component labelling over boolean pixel sets.

use std::collections::VecDeque;

/// Connected components of the pixels for which `member(i)` is true,
/// discovered in row-major order of their first pixel. Each component lists
/// its pixel indices in ascending order.
pub fn components4<F>(width: usize, height: usize, member: F) -> Vec<Vec<usize>>
where
    F: Fn(usize) -> bool,
{
    let n = width * height;
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if seen[start] || !member(start) {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Vec::new();
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (x, y) = (i % width, i / width);
            let mut visit = |j: usize| {
                if !seen[j] && member(j) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_pixels_are_separate() {
        #[rustfmt::skip]
        let grid = [
            1, 0, 1, 1,
            0, 1, 1, 0,
            0, 0, 0, 0,
            0, 0, 0, 1,
        ];
        let comps = components4(4, 4, |i| grid[i] == 1);
        assert_eq!(comps, vec![vec![0], vec![2, 3, 5, 6], vec![15]]);
    }

    #[test]
    fn empty_and_full() {
        assert!(components4(3, 3, |_| false).is_empty());
        let full = components4(3, 3, |_| true);
        assert_eq!(full.len(), 1);
        assert_eq!(full[0].len(), 9);
    }

    #[test]
    fn u_shape_is_one_component() {
        #[rustfmt::skip]
        let grid = [
            1, 0, 1,
            1, 0, 1,
            1, 1, 1,
        ];
        let comps = components4(3, 3, |i| grid[i] == 1);
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].len(), 7);
    }
}
