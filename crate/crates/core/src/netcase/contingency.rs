use super::{BranchId, NetError, NetworkCase};

/// Connected components over in-service branches, as lists of bus indices.
pub fn connected_components(case: &NetworkCase) -> Vec<Vec<usize>> {
    let n = case.n_buses();
    let mut adj = vec![Vec::new(); n];
    for br in case.branches.iter().filter(|b| b.in_service) {
        if let (Some(f), Some(t)) = (case.bus_index(br.from), case.bus_index(br.to)) {
            adj[f].push(t);
            adj[t].push(f);
        }
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut head = 0;
        while head < comp.len() {
            let u = comp[head];
            head += 1;
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    comp.push(v);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

pub fn is_connected(case: &NetworkCase) -> bool {
    connected_components(case).len() <= 1
}

/// Copy of `case` with one branch taken out of service.
pub fn apply_contingency(case: &NetworkCase, branch: BranchId) -> Result<NetworkCase, NetError> {
    let br = case.branches.get(branch).ok_or(NetError::NoSuchBranch(branch))?;
    if !br.in_service {
        return Err(NetError::BranchOutOfService(branch));
    }
    let mut out = case.clone();
    out.branches[branch].in_service = false;
    if !is_connected(&out) {
        return Err(NetError::Islanding {
            branch,
            from: br.from,
            to: br.to,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcase::build_ybus;
    use crate::netcase::tests_support::two_bus;

    #[test]
    fn single_branch_outage_islands() {
        let case = two_bus(0.5, 0.2, 0.0, 0.1);
        assert!(matches!(
            apply_contingency(&case, 0),
            Err(NetError::Islanding { branch: 0, .. })
        ));
    }

    #[test]
    fn parallel_branch_outage_keeps_connectivity() {
        let mut case = two_bus(0.5, 0.2, 0.0, 0.1);
        case.branches.push(case.branches[0].clone());
        let out = apply_contingency(&case, 1).unwrap();
        assert!(!out.branches[1].in_service);
        assert!(case.branches[1].in_service, "original untouched");

        let mut authored = two_bus(0.5, 0.2, 0.0, 0.1);
        authored.branches.push(authored.branches[0].clone());
        authored.branches[1].in_service = false;
        assert_eq!(build_ybus(&out), build_ybus(&authored));
    }

    #[test]
    fn outage_of_missing_or_open_branch() {
        let mut case = two_bus(0.5, 0.2, 0.0, 0.1);
        assert!(matches!(
            apply_contingency(&case, 4),
            Err(NetError::NoSuchBranch(4))
        ));
        case.branches.push(case.branches[0].clone());
        case.branches[1].in_service = false;
        assert!(matches!(
            apply_contingency(&case, 1),
            Err(NetError::BranchOutOfService(1))
        ));
    }
}
