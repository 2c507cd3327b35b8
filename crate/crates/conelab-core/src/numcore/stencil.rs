//! Fourth-order finite differences on uniformly spaced samples.
//!
//! Ends are either closed with one-sided stencils or with ghost values from
//! a parity extension. `Even`/`Odd` reflect about the end node itself;
//! `EvenHalf`/`OddHalf` reflect about the point half a step beyond it
//! (cell-centred samples next to a pole).

use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    OneSided,
    Even,
    Odd,
    EvenHalf,
    OddHalf,
}

fn ghost(f: &[f64], end: End, k: usize, left: bool) -> f64 {
    // k = 1, 2: distance (in nodes) beyond the end.
    let n = f.len();
    let at = |i: usize| if left { f[i] } else { f[n - 1 - i] };
    match end {
        End::Even => at(k),
        End::Odd => -at(k),
        End::EvenHalf => at(k - 1),
        End::OddHalf => -at(k - 1),
        End::OneSided => unreachable!(),
    }
}

fn extended(f: &[f64], left: End, right: End) -> Option<Vec<f64>> {
    if left == End::OneSided && right == End::OneSided {
        return None;
    }
    let n = f.len();
    let mut e = Vec::with_capacity(n + 4);
    if left == End::OneSided {
        e.extend([0.0, 0.0]);
    } else {
        e.push(ghost(f, left, 2, true));
        e.push(ghost(f, left, 1, true));
    }
    e.extend_from_slice(f);
    if right == End::OneSided {
        e.extend([0.0, 0.0]);
    } else {
        e.push(ghost(f, right, 1, false));
        e.push(ghost(f, right, 2, false));
    }
    Some(e)
}

/// First derivative, fourth order.
pub fn d1(f: &[f64], h: f64, left: End, right: End) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 6, "stencil needs at least 6 samples");
    let mut d = alloc::vec![0.0; n];
    let ext = extended(f, left, right);
    let val = |i: isize| -> f64 {
        match &ext {
            Some(e) => e[(i + 2) as usize],
            None => f[i as usize],
        }
    };
    for i in 0..n {
        let ii = i as isize;
        let one_left = left == End::OneSided && i < 2;
        let one_right = right == End::OneSided && i + 2 >= n;
        d[i] = if one_left {
            if i == 0 {
                (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h)
            } else {
                (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h)
            }
        } else if one_right {
            let m = n - 1;
            if i == m {
                (25.0 * f[m] - 48.0 * f[m - 1] + 36.0 * f[m - 2] - 16.0 * f[m - 3] + 3.0 * f[m - 4])
                    / (12.0 * h)
            } else {
                (3.0 * f[m] + 10.0 * f[m - 1] - 18.0 * f[m - 2] + 6.0 * f[m - 3] - f[m - 4])
                    / (12.0 * h)
            }
        } else {
            (-val(ii + 2) + 8.0 * val(ii + 1) - 8.0 * val(ii - 1) + val(ii - 2)) / (12.0 * h)
        };
    }
    d
}

/// Second derivative, fourth order.
pub fn d2(f: &[f64], h: f64, left: End, right: End) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 6, "stencil needs at least 6 samples");
    let h2 = 12.0 * h * h;
    let mut d = alloc::vec![0.0; n];
    let ext = extended(f, left, right);
    let val = |i: isize| -> f64 {
        match &ext {
            Some(e) => e[(i + 2) as usize],
            None => f[i as usize],
        }
    };
    for i in 0..n {
        let ii = i as isize;
        let one_left = left == End::OneSided && i < 2;
        let one_right = right == End::OneSided && i + 2 >= n;
        d[i] = if one_left {
            if i == 0 {
                (45.0 * f[0] - 154.0 * f[1] + 214.0 * f[2] - 156.0 * f[3] + 61.0 * f[4]
                    - 10.0 * f[5])
                    / h2
            } else {
                (10.0 * f[0] - 15.0 * f[1] - 4.0 * f[2] + 14.0 * f[3] - 6.0 * f[4] + f[5]) / h2
            }
        } else if one_right {
            let m = n - 1;
            if i == m {
                (45.0 * f[m] - 154.0 * f[m - 1] + 214.0 * f[m - 2] - 156.0 * f[m - 3]
                    + 61.0 * f[m - 4]
                    - 10.0 * f[m - 5])
                    / h2
            } else {
                (10.0 * f[m] - 15.0 * f[m - 1] - 4.0 * f[m - 2] + 14.0 * f[m - 3] - 6.0 * f[m - 4]
                    + f[m - 5])
                    / h2
            }
        } else {
            (-val(ii + 2) + 16.0 * val(ii + 1) - 30.0 * val(ii) + 16.0 * val(ii - 1) - val(ii - 2))
                / h2
        };
    }
    d
}
