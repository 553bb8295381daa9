use crate::error::{invalid_arg, shape_err, Result};
use crate::nn::{Graph, Linear};
use crate::tensor::Var;

/// `s_i = o_i W + b` for every row of `o: [n, parser_dim]`.
pub fn sawr_project(g: &mut Graph, o: Var, proj: &Linear) -> Result<Var> {
    proj.forward(g, o)
}

/// `x_i = e_i ⊕ s_i`, row by row.
pub fn sawr_augment(g: &mut Graph, e: Var, s: Var) -> Result<Var> {
    let (ne, ns) = (g.shape(e)[0], g.shape(s)[0]);
    if ne != ns {
        return Err(invalid_arg!("{ne} embeddings but {ns} syntax vectors"));
    }
    if g.shape(e).len() != 2 || g.shape(s).len() != 2 {
        return Err(shape_err!("sawr_augment expects matrices"));
    }
    g.concat(&[e, s], 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamStore;
    use crate::tensor::{init_uniform, Tensor};

    #[test]
    fn projection_cases() {
        let mut store = ParamStore::new();
        store.insert("p.W", Tensor::eye(3));
        store.insert("p.b", Tensor::zeros(&[1, 3]));
        store.insert("z.W", Tensor::zeros(&[3, 2]));
        store.insert("z.b", Tensor::row(vec![0.5, -1.0]));
        let mut g = Graph::eval(&store);
        let o_val = init_uniform(&[4, 3], -1.0, 1.0, 2).unwrap();
        let o = g.constant(o_val.clone());
        let s = sawr_project(&mut g, o, &Linear::new("p", 3, 3)).unwrap();
        assert_eq!(g.value(s), &o_val);
        let z = sawr_project(&mut g, o, &Linear::new("z", 3, 2)).unwrap();
        for i in 0..4 {
            assert_eq!(g.value(z).row_slice(i), &[0.5, -1.0]);
        }
    }

    #[test]
    fn hand_projection() {
        let mut store = ParamStore::new();
        store.insert("p.W", Tensor::from_rows(&[[1.0, 2.0], [0.0, -1.0], [3.0, 0.5]]).unwrap());
        store.insert("p.b", Tensor::row(vec![0.1, 0.2]));
        let mut g = Graph::eval(&store);
        let o = g.constant(Tensor::from_rows(&[[1.0, 1.0, 1.0], [2.0, 0.0, -1.0]]).unwrap());
        let s = sawr_project(&mut g, o, &Linear::new("p", 3, 2)).unwrap();
        assert_eq!(g.value(s).data(), &[4.1, 1.7, -0.9, 3.7]);
    }

    #[test]
    fn augment_concatenates() {
        let store = ParamStore::new();
        let mut g = Graph::eval(&store);
        let e = g.constant(Tensor::full(&[3, 4], 1.0));
        let s = g.constant(Tensor::zeros(&[3, 4]));
        let x = sawr_augment(&mut g, e, s).unwrap();
        assert_eq!(g.shape(x), &[3, 8]);
        assert_eq!(g.value(x).row_slice(1), &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let short = g.constant(Tensor::zeros(&[2, 4]));
        assert!(sawr_augment(&mut g, e, short).is_err());
    }
}
