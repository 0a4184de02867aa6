//! Separable N-dimensional FFT on row-major `M^N` arrays.
//!
//! Transforms are unnormalized; callers apply the physical scaling. Plans are
//! cached per thread so repeated transforms in the solver loop do not re-plan.

use std::cell::RefCell;
use std::rc::Rc;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    static SYMBOLS: RefCell<Vec<(SymbolKey, Rc<Vec<f64>>)>> = const { RefCell::new(Vec::new()) };
}

#[derive(Clone, Copy, PartialEq, Eq)]
struct SymbolKey {
    dims: usize,
    m: usize,
    box_bits: u64,
    order_bits: u64,
}

const SYMBOL_CACHE: usize = 4;

pub(crate) fn transform(data: &mut [Complex64], dims: usize, m: usize, direction: FftDirection) {
    debug_assert_eq!(data.len(), m.pow(dims as u32));
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft(m, direction));
    let total = data.len();
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut lines = vec![Complex64::default(); total];
    for axis in 0..dims {
        let stride = m.pow((dims - 1 - axis) as u32);
        if stride == 1 {
            fft.process_with_scratch(data, &mut scratch);
            continue;
        }
        let outer = total / (m * stride);
        // gather every line along `axis` into a contiguous block
        let mut line = 0;
        for o in 0..outer {
            let base_o = o * m * stride;
            for inner in 0..stride {
                let base = base_o + inner;
                let dst = &mut lines[line * m..(line + 1) * m];
                for (t, d) in dst.iter_mut().enumerate() {
                    *d = data[base + t * stride];
                }
                line += 1;
            }
        }
        fft.process_with_scratch(&mut lines, &mut scratch);
        let mut line = 0;
        for o in 0..outer {
            let base_o = o * m * stride;
            for inner in 0..stride {
                let base = base_o + inner;
                let src = &lines[line * m..(line + 1) * m];
                for (t, s) in src.iter().enumerate() {
                    data[base + t * stride] = *s;
                }
                line += 1;
            }
        }
    }
}

/// Integer frequency of FFT index `idx` on an axis of `m` points, in `[-m/2, m/2)`.
#[inline]
pub(crate) fn frequency(idx: usize, m: usize) -> i64 {
    if idx < m / 2 {
        idx as i64
    } else {
        idx as i64 - m as i64
    }
}

/// `|2 pi k / L|^{2s}` laid out in FFT order, cached per thread.
pub(crate) fn fractional_symbol(dims: usize, m: usize, box_length: f64, order: f64) -> Rc<Vec<f64>> {
    let key = SymbolKey {
        dims,
        m,
        box_bits: box_length.to_bits(),
        order_bits: order.to_bits(),
    };
    if let Some(hit) = SYMBOLS.with(|c| {
        c.borrow()
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| Rc::clone(v))
    }) {
        return hit;
    }
    let total = m.pow(dims as u32);
    let dk = 2.0 * std::f64::consts::PI / box_length;
    let k2_axis: Vec<f64> = (0..m)
        .map(|i| {
            let k = frequency(i, m) as f64 * dk;
            k * k
        })
        .collect();
    let mut symbol = vec![0.0; total];
    let mut idx = vec![0usize; dims];
    for v in symbol.iter_mut() {
        let k2: f64 = idx.iter().map(|&i| k2_axis[i]).sum();
        *v = if k2 == 0.0 { 0.0 } else { k2.powf(order) };
        for a in (0..dims).rev() {
            idx[a] += 1;
            if idx[a] < m {
                break;
            }
            idx[a] = 0;
        }
    }
    let symbol = Rc::new(symbol);
    SYMBOLS.with(|c| {
        let mut c = c.borrow_mut();
        if c.len() >= SYMBOL_CACHE {
            c.remove(0);
        }
        c.push((key, Rc::clone(&symbol)));
    });
    symbol
}
