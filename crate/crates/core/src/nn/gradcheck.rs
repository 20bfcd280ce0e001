use super::{NnError, ParameterStore, Tape, Var};

/// Agreement between reverse-mode and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// `‖g_rev - g_fd‖ / max(‖g_rev‖, ‖g_fd‖)` over all parameters.
    pub rel_error: f64,
    pub max_abs_error: f64,
    pub grad_norm: f64,
    pub entries: usize,
}

/// Compares the gradient of `loss` with central differences of step `h`
/// on every scalar of `store`. `loss` must record a scalar on the tape.
pub fn gradient_check(
    store: &mut ParameterStore,
    h: f64,
    loss: impl Fn(&mut Tape, &ParameterStore) -> Result<Var, NnError>,
) -> Result<GradCheck, NnError> {
    store.zero_grad();
    let mut tape = Tape::new();
    let l = loss(&mut tape, store)?;
    tape.backward(l, store)?;
    let eval = |store: &ParameterStore| -> Result<f64, NnError> {
        let mut tape = Tape::new();
        let l = loss(&mut tape, store)?;
        Ok(tape.value(l).item())
    };
    let ids: alloc::vec::Vec<_> = store.iter().map(|(id, _)| id).collect();
    let (mut diff2, mut rev2, mut fd2, mut max_abs, mut entries) = (0.0, 0.0, 0.0, 0.0f64, 0);
    for id in ids {
        for i in 0..store.value(id).len() {
            let x = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = x + h;
            let up = eval(store)?;
            store.value_mut(id).data_mut()[i] = x - h;
            let down = eval(store)?;
            store.value_mut(id).data_mut()[i] = x;
            let fd = (up - down) / (2.0 * h);
            let rev = store.grad(id).data()[i];
            diff2 += (fd - rev) * (fd - rev);
            rev2 += rev * rev;
            fd2 += fd * fd;
            max_abs = max_abs.max((fd - rev).abs());
            entries += 1;
        }
    }
    let scale = libm::sqrt(rev2.max(fd2));
    let rel_error = if scale == 0.0 { 0.0 } else { libm::sqrt(diff2) / scale };
    Ok(GradCheck {
        rel_error,
        max_abs_error: max_abs,
        grad_norm: libm::sqrt(rev2),
        entries,
    })
}
