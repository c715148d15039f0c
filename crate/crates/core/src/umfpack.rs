//! Minimal binding to the system UMFPACK library (`dl` interface).

use std::ffi::c_void;
use std::ptr;

const CONTROL: usize = 20;
const INFO: usize = 90;
const IRSTEP: usize = 7;
const STRATEGY: usize = 5;
const ORDERING: usize = 10;
const STRATEGY_SYMMETRIC: f64 = 3.0;
const ORDERING_METIS: f64 = 3.0;
const SYS_AT: i64 = 1;
const STATUS_OK: i64 = 0;

#[link(name = "umfpack")]
extern "C" {
    fn umfpack_dl_defaults(control: *mut f64);
    fn umfpack_dl_symbolic(
        n_row: i64,
        n_col: i64,
        ap: *const i64,
        ai: *const i64,
        ax: *const f64,
        symbolic: *mut *mut c_void,
        control: *const f64,
        info: *mut f64,
    ) -> i64;
    fn umfpack_dl_numeric(
        ap: *const i64,
        ai: *const i64,
        ax: *const f64,
        symbolic: *mut c_void,
        numeric: *mut *mut c_void,
        control: *const f64,
        info: *mut f64,
    ) -> i64;
    fn umfpack_dl_solve(
        sys: i64,
        ap: *const i64,
        ai: *const i64,
        ax: *const f64,
        x: *mut f64,
        b: *const f64,
        numeric: *mut c_void,
        control: *const f64,
        info: *mut f64,
    ) -> i64;
    fn umfpack_dl_free_symbolic(symbolic: *mut *mut c_void);
    fn umfpack_dl_free_numeric(numeric: *mut *mut c_void);
}

/// LU factors of a square CSR matrix. The CSR arrays are handed over as the
/// CSC arrays of the transpose, so solves use the transposed system.
pub(crate) struct UmfpackLu {
    n: usize,
    ap: Vec<i64>,
    ai: Vec<i64>,
    control: [f64; CONTROL],
    symbolic: *mut c_void,
    numeric: *mut c_void,
}

// The handles are owned exclusively and UMFPACK keeps no shared state.
unsafe impl Send for UmfpackLu {}

impl UmfpackLu {
    /// Symbolic analysis of the pattern.
    pub(crate) fn analyze(n: usize, row_ptr: &[usize], col_idx: &[usize], values: &[f64]) -> Result<Self, String> {
        let mut control = [0.0; CONTROL];
        unsafe { umfpack_dl_defaults(control.as_mut_ptr()) };
        control[IRSTEP] = 0.0;
        // the saddle point blocks are structurally symmetric
        control[STRATEGY] = STRATEGY_SYMMETRIC;
        control[ORDERING] = ORDERING_METIS;
        let mut lu = Self {
            n,
            ap: row_ptr.iter().map(|&v| v as i64).collect(),
            ai: col_idx.iter().map(|&v| v as i64).collect(),
            control,
            symbolic: ptr::null_mut(),
            numeric: ptr::null_mut(),
        };
        let mut info = [0.0; INFO];
        let status = unsafe {
            umfpack_dl_symbolic(
                n as i64,
                n as i64,
                lu.ap.as_ptr(),
                lu.ai.as_ptr(),
                values.as_ptr(),
                &mut lu.symbolic,
                lu.control.as_ptr(),
                info.as_mut_ptr(),
            )
        };
        if status != STATUS_OK {
            return Err(format!("symbolic analysis returned status {status}"));
        }
        Ok(lu)
    }

    /// Numeric factorization for new values on the analyzed pattern.
    pub(crate) fn factor(&mut self, values: &[f64]) -> Result<(), String> {
        self.free_numeric();
        let mut info = [0.0; INFO];
        let status = unsafe {
            umfpack_dl_numeric(
                self.ap.as_ptr(),
                self.ai.as_ptr(),
                values.as_ptr(),
                self.symbolic,
                &mut self.numeric,
                self.control.as_ptr(),
                info.as_mut_ptr(),
            )
        };
        if status != STATUS_OK {
            self.free_numeric();
            return Err(format!("numeric factorization returned status {status}"));
        }
        Ok(())
    }

    /// Overwrite `b` with the solution of `A x = b`.
    pub(crate) fn solve_in_place(&self, values: &[f64], b: &mut [f64]) -> Result<(), String> {
        assert!(!self.numeric.is_null(), "solve before factor");
        assert_eq!(b.len(), self.n);
        let mut x = vec![0.0; self.n];
        let mut info = [0.0; INFO];
        let status = unsafe {
            umfpack_dl_solve(
                SYS_AT,
                self.ap.as_ptr(),
                self.ai.as_ptr(),
                values.as_ptr(),
                x.as_mut_ptr(),
                b.as_ptr(),
                self.numeric,
                self.control.as_ptr(),
                info.as_mut_ptr(),
            )
        };
        if status != STATUS_OK {
            return Err(format!("solve returned status {status}"));
        }
        b.copy_from_slice(&x);
        Ok(())
    }

    fn free_numeric(&mut self) {
        if !self.numeric.is_null() {
            unsafe { umfpack_dl_free_numeric(&mut self.numeric) };
            self.numeric = ptr::null_mut();
        }
    }
}

impl Drop for UmfpackLu {
    fn drop(&mut self) {
        self.free_numeric();
        if !self.symbolic.is_null() {
            unsafe { umfpack_dl_free_symbolic(&mut self.symbolic) };
        }
    }
}
